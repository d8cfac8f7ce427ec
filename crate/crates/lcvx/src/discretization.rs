//! Exact discretization of continuous LTI dynamics under first-order-hold
//! (piecewise linear) and zero-order-hold (piecewise constant) controls.
//!
//! The first-order-hold map is
//!
//! ```text
//! x_{i+1} = A x_i + B0 u_i + B1 u_{i+1}
//! ```
//!
//! with `A`, `B0`, `B1` obtained by integrating the state-transition
//! matrix ODEs over one grid segment. The grid is uniform: `N` segments
//! of length `dt = t_f / N`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous LTI system `xdot = A_c x + B_c u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSystem {
    pub a_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
}

impl ContinuousSystem {
    pub fn new(a_c: DMatrix<f64>, b_c: DMatrix<f64>) -> Result<Self> {
        if !a_c.is_square() {
            return Err(Error::validation(format!(
                "A_c must be square, got {}x{}",
                a_c.nrows(),
                a_c.ncols()
            )));
        }
        if b_c.nrows() != a_c.nrows() {
            return Err(Error::validation(format!(
                "B_c has {} rows but A_c is {}x{}",
                b_c.nrows(),
                a_c.nrows(),
                a_c.ncols()
            )));
        }
        if a_c.nrows() == 0 || b_c.ncols() == 0 {
            return Err(Error::validation("system dimensions must be positive"));
        }
        if a_c.iter().chain(b_c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation("system matrices must be finite"));
        }
        Ok(Self { a_c, b_c })
    }

    pub fn n_states(&self) -> usize {
        self.a_c.nrows()
    }

    pub fn n_controls(&self) -> usize {
        self.b_c.ncols()
    }
}

/// Discrete dynamics `x_{i+1} = A x_i + B0 u_i + B1 u_{i+1}` on a uniform
/// grid of `n_segments` segments covering `[0, t_f]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSystem {
    pub a: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub dt: f64,
    pub n_segments: usize,
    pub t_f: f64,
}

impl DiscreteSystem {
    pub fn new(
        a: DMatrix<f64>,
        b0: DMatrix<f64>,
        b1: DMatrix<f64>,
        dt: f64,
        n_segments: usize,
        t_f: f64,
    ) -> Result<Self> {
        if !a.is_square() || b0.nrows() != a.nrows() || b1.nrows() != a.nrows() {
            return Err(Error::validation("discrete matrices have mismatched shapes"));
        }
        if b0.ncols() != b1.ncols() {
            return Err(Error::validation("B0 and B1 must have equal column counts"));
        }
        if !dt.is_finite() || dt <= 0.0 || n_segments == 0 || !t_f.is_finite() || t_f <= 0.0 {
            return Err(Error::validation("grid must satisfy dt > 0, N >= 1, t_f > 0"));
        }
        let grid_err = (dt * n_segments as f64 - t_f).abs();
        if grid_err > 1e-12 * t_f.max(1.0) {
            return Err(Error::validation(format!(
                "grid mismatch: dt * N = {} but t_f = {}",
                dt * n_segments as f64,
                t_f
            )));
        }
        if a.iter().chain(b0.iter()).chain(b1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation("discrete matrices must be finite"));
        }
        Ok(Self { a, b0, b1, dt, n_segments, t_f })
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_controls(&self) -> usize {
        self.b0.ncols()
    }

    /// Grid time of vertex `i` (0-based), `t_i = i * dt`.
    pub fn vertex_time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// Number of grid vertices, `N + 1`.
    pub fn n_vertices(&self) -> usize {
        self.n_segments + 1
    }
}

fn validate_grid(sys: &ContinuousSystem, t_f: f64, n_segments: usize) -> Result<()> {
    let _ = sys;
    if !t_f.is_finite() || t_f <= 0.0 {
        return Err(Error::validation("t_f must be positive and finite"));
    }
    if n_segments == 0 {
        return Err(Error::validation("n_segments must be at least 1"));
    }
    Ok(())
}

/// Right-hand side of the three state-transition ODEs at local time `tau`
/// within a segment of length `dt`. `w0`/`w1` weight the control influence
/// for the first/second control vertex.
struct StmDerivatives<'a> {
    sys: &'a ContinuousSystem,
    dt: f64,
}

impl StmDerivatives<'_> {
    fn eval(
        &self,
        tau: f64,
        phi_a: &DMatrix<f64>,
        phi_b0: &DMatrix<f64>,
        phi_b1: &DMatrix<f64>,
        foh: bool,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let a_c = &self.sys.a_c;
        let b_c = &self.sys.b_c;
        let (w0, w1) = if foh {
            ((self.dt - tau) / self.dt, tau / self.dt)
        } else {
            (1.0, 0.0)
        };
        (
            a_c * phi_a,
            a_c * phi_b0 + b_c * w0,
            a_c * phi_b1 + b_c * w1,
        )
    }
}

/// Classical 4th-order fixed-step integration of the STM ODEs over one
/// segment. Returns `(Phi_A, Phi_B0, Phi_B1)` at the segment end.
fn integrate_segment(
    sys: &ContinuousSystem,
    dt: f64,
    substeps: usize,
    foh: bool,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = sys.n_states();
    let m = sys.n_controls();
    let mut phi_a = DMatrix::identity(n, n);
    let mut phi_b0 = DMatrix::zeros(n, m);
    let mut phi_b1 = DMatrix::zeros(n, m);

    let rhs = StmDerivatives { sys, dt };
    let h = dt / substeps as f64;
    for step in 0..substeps {
        let tau = step as f64 * h;

        let (ka1, kb01, kb11) = rhs.eval(tau, &phi_a, &phi_b0, &phi_b1, foh);
        let (ka2, kb02, kb12) = rhs.eval(
            tau + 0.5 * h,
            &(&phi_a + &ka1 * (0.5 * h)),
            &(&phi_b0 + &kb01 * (0.5 * h)),
            &(&phi_b1 + &kb11 * (0.5 * h)),
            foh,
        );
        let (ka3, kb03, kb13) = rhs.eval(
            tau + 0.5 * h,
            &(&phi_a + &ka2 * (0.5 * h)),
            &(&phi_b0 + &kb02 * (0.5 * h)),
            &(&phi_b1 + &kb12 * (0.5 * h)),
            foh,
        );
        let (ka4, kb04, kb14) = rhs.eval(
            tau + h,
            &(&phi_a + &ka3 * h),
            &(&phi_b0 + &kb03 * h),
            &(&phi_b1 + &kb13 * h),
            foh,
        );

        phi_a += (ka1 + ka2 * 2.0 + ka3 * 2.0 + ka4) * (h / 6.0);
        phi_b0 += (kb01 + kb02 * 2.0 + kb03 * 2.0 + kb04) * (h / 6.0);
        phi_b1 += (kb11 + kb12 * 2.0 + kb13 * 2.0 + kb14) * (h / 6.0);
    }
    (phi_a, phi_b0, phi_b1)
}

/// Default number of integration substeps per grid segment.
pub const DEFAULT_SUBSTEPS: usize = 64;

/// Integrates the state-transition matrices of `sys` over one segment of a
/// uniform `n_segments` grid on `[0, t_f]`, producing the first-order-hold
/// discrete system. The system is time invariant and the grid uniform, so
/// one segment determines all of them.
pub fn integrate_stm(
    sys: &ContinuousSystem,
    t_f: f64,
    n_segments: usize,
    substeps: usize,
) -> Result<DiscreteSystem> {
    validate_grid(sys, t_f, n_segments)?;
    if substeps == 0 {
        return Err(Error::validation("substeps must be at least 1"));
    }
    let dt = t_f / n_segments as f64;
    let (a, b0, b1) = integrate_segment(sys, dt, substeps, true);
    DiscreteSystem::new(a, b0, b1, dt, n_segments, t_f)
}

/// Zero-order-hold pair `(A, B)` for the piecewise-constant baseline
/// `x_{i+1} = A x_i + B u_i`.
pub fn discretize_zoh(
    sys: &ContinuousSystem,
    t_f: f64,
    n_segments: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    validate_grid(sys, t_f, n_segments)?;
    let dt = t_f / n_segments as f64;
    let (a, b, _) = integrate_segment(sys, dt, DEFAULT_SUBSTEPS, false);
    Ok((a, b))
}

/// Rank of the controllability matrix of the pair `(A, B0 + A B1)` and
/// whether it is full.
///
/// Rank is decided by a singular-value cutoff of `n_x * eps * sigma_max`
/// rather than exactly; the discrete matrices are floating point.
pub fn check_controllability(disc: &DiscreteSystem) -> (usize, bool) {
    let n = disc.n_states();
    let m = disc.n_controls();
    let c = &disc.b0 + &disc.a * &disc.b1;

    let mut blocks = DMatrix::zeros(n, n * m);
    let mut power = c;
    for k in 0..n {
        blocks.view_mut((0, k * m), (n, m)).copy_from(&power);
        power = &disc.a * power;
    }

    let svd = blocks.svd(false, false);
    let sigma_max = svd.singular_values.max();
    let tol = n as f64 * f64::EPSILON * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    (rank, rank == n)
}

/// Iterates `x_{i+1} = A x_i + B0 u_i + B1 u_{i+1}` from `x_init` under the
/// given control sequence, returning all `N + 1` states.
pub fn rollout(
    disc: &DiscreteSystem,
    x_init: &DVector<f64>,
    u: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let n_vertices = disc.n_vertices();
    if u.len() != n_vertices {
        return Err(Error::validation(format!(
            "control sequence has {} entries, expected {}",
            u.len(),
            n_vertices
        )));
    }
    if x_init.len() != disc.n_states() {
        return Err(Error::validation("x_init dimension mismatch"));
    }
    for (i, ui) in u.iter().enumerate() {
        if ui.len() != disc.n_controls() {
            return Err(Error::validation(format!(
                "control {} has dimension {}, expected {}",
                i,
                ui.len(),
                disc.n_controls()
            )));
        }
    }

    let mut states = Vec::with_capacity(n_vertices);
    states.push(x_init.clone());
    for i in 0..disc.n_segments {
        let next = &disc.a * &states[i] + &disc.b0 * &u[i] + &disc.b1 * &u[i + 1];
        states.push(next);
    }
    Ok(states)
}
