//! Solver-agnostic conic program assembly.
//!
//! The program is held in the standard embedded form
//!
//! ```text
//! min  (1/2) v' P v + q' v    s.t.  A v + s = b,  s in K
//! ```
//!
//! with `K` a product of zero, nonnegative, and second-order cones. Row
//! and column layouts are recorded so primal trajectories and the
//! dynamics-equality multipliers can be recovered from any backend that
//! honors this form.

use serde::{Deserialize, Serialize};

use super::{RunningCost, TrajectoryProblem};
use crate::error::{Error, Result};

/// One cone block, in row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeBlock {
    Zero(usize),
    NonNegative(usize),
    SecondOrder(usize),
}

impl ConeBlock {
    pub fn dim(&self) -> usize {
        match self {
            ConeBlock::Zero(d) | ConeBlock::NonNegative(d) | ConeBlock::SecondOrder(d) => *d,
        }
    }
}

/// Column layout of the decision vector: states, controls, slack norms,
/// then any auxiliary epigraph variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableLayout {
    pub n_x: usize,
    pub n_u: usize,
    pub n_segments: usize,
    pub terminal_epigraph: bool,
    pub extra_scalar: bool,
}

impl VariableLayout {
    pub fn n_vertices(&self) -> usize {
        self.n_segments + 1
    }

    pub fn idx_x(&self, vertex: usize, k: usize) -> usize {
        vertex * self.n_x + k
    }

    pub fn idx_u(&self, vertex: usize, k: usize) -> usize {
        self.n_vertices() * self.n_x + vertex * self.n_u + k
    }

    pub fn idx_sigma(&self, vertex: usize) -> usize {
        self.n_vertices() * (self.n_x + self.n_u) + vertex
    }

    /// Index of the terminal-norm epigraph variable, when present.
    pub fn idx_terminal(&self) -> Option<usize> {
        self.terminal_epigraph
            .then(|| self.n_vertices() * (self.n_x + self.n_u + 1))
    }

    /// Index of the extra scalar used by diagnostic probes.
    pub fn idx_extra(&self) -> Option<usize> {
        if !self.extra_scalar {
            return None;
        }
        Some(self.n_vertices() * (self.n_x + self.n_u + 1) + usize::from(self.terminal_epigraph))
    }

    pub fn n_primary(&self) -> usize {
        self.n_vertices() * (self.n_x + self.n_u + 1)
    }

    pub fn n_vars(&self) -> usize {
        self.n_primary() + usize::from(self.terminal_epigraph) + usize::from(self.extra_scalar)
    }
}

/// Row layout of the equality (zero-cone) block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowLayout {
    pub init_start: usize,
    pub dynamics_start: usize,
    pub terminal_start: usize,
    /// Start of rate rows encoded as equalities (only for a zero rate bound).
    pub rate_equality_start: Option<usize>,
    pub zero_rows: usize,
}

/// Size summary of an assembled program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramMeta {
    pub primary_variables: usize,
    pub auxiliary_variables: usize,
    pub dynamics_blocks: usize,
    pub dynamics_rows: usize,
    pub init_rows: usize,
    pub terminal_rows: usize,
    pub rate_equality_rows: usize,
    pub sigma_bound_rows: usize,
    pub norm_cones: usize,
    pub rate_cones: usize,
    pub terminal_cone: bool,
    pub running_cost_encoding: String,
}

/// An assembled conic program together with the problem it came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConicProgram {
    pub problem: TrajectoryProblem,
    pub layout: VariableLayout,
    pub rows: RowLayout,
    /// Diagonal of the quadratic objective term.
    pub p_diag: Vec<f64>,
    pub q: Vec<f64>,
    /// Constraint matrix in (row, col, value) triplets.
    pub a_triplets: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: Vec<ConeBlock>,
    pub meta: ProgramMeta,
}

impl ConicProgram {
    pub fn n_vars(&self) -> usize {
        self.q.len()
    }

    pub fn n_rows(&self) -> usize {
        self.b.len()
    }

    /// Residual `A v - b` restricted to the zero-cone rows.
    pub fn equality_residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.rows.zero_rows];
        for &(row, col, val) in &self.a_triplets {
            if row < self.rows.zero_rows {
                r[row] += val * v[col];
            }
        }
        for (ri, bi) in r.iter_mut().zip(&self.b) {
            *ri -= bi;
        }
        r
    }
}

struct Assembler {
    triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    cones: Vec<ConeBlock>,
    next_row: usize,
}

impl Assembler {
    fn new() -> Self {
        Self {
            triplets: Vec::new(),
            b: Vec::new(),
            cones: Vec::new(),
            next_row: 0,
        }
    }

    fn coeff(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.triplets.push((row, col, value));
        }
    }

    fn rows(&mut self, count: usize) -> usize {
        let start = self.next_row;
        self.next_row += count;
        self.b.resize(self.next_row, 0.0);
        start
    }

    fn cone(&mut self, cone: ConeBlock) {
        self.cones.push(cone);
    }
}

/// Shared equality rows: the initial condition, the dynamics chain, and
/// the affine terminal map. Returns the row layout of the block written.
fn add_equality_rows(
    asm: &mut Assembler,
    problem: &TrajectoryProblem,
    layout: &VariableLayout,
    rate_equalities: bool,
) -> RowLayout {
    let disc = &problem.disc;
    let n_x = layout.n_x;
    let n_u = layout.n_u;
    let n_seg = layout.n_segments;
    let n_g = problem.terminal_matrix.nrows();

    // x_1 = x_init
    let init_start = asm.rows(n_x);
    for k in 0..n_x {
        asm.coeff(init_start + k, layout.idx_x(0, k), 1.0);
        asm.b[init_start + k] = problem.x_init[k];
    }

    // A x_i - x_{i+1} + B0 u_i + B1 u_{i+1} = 0. The multiplier of this row
    // block is the eta of the stationarity relations, with no sign change.
    let dynamics_start = asm.rows(n_seg * n_x);
    for i in 0..n_seg {
        for k in 0..n_x {
            let row = dynamics_start + i * n_x + k;
            for j in 0..n_x {
                asm.coeff(row, layout.idx_x(i, j), disc.a[(k, j)]);
            }
            asm.coeff(row, layout.idx_x(i + 1, k), -1.0);
            for j in 0..n_u {
                asm.coeff(row, layout.idx_u(i, j), disc.b0[(k, j)]);
                asm.coeff(row, layout.idx_u(i + 1, j), disc.b1[(k, j)]);
            }
        }
    }

    // G(x_{N+1}) = G_m x + g = 0, encoded as G_m x = -g.
    let terminal_start = asm.rows(n_g);
    for k in 0..n_g {
        let row = terminal_start + k;
        for j in 0..n_x {
            asm.coeff(row, layout.idx_x(n_seg, j), problem.terminal_matrix[(k, j)]);
        }
        asm.b[row] = -problem.terminal_offset[k];
    }

    // A zero rate bound pins consecutive controls equal; an equality block
    // is exact where a radius-zero cone would be degenerate.
    let rate_equality_start = if rate_equalities {
        let start = asm.rows(n_seg * n_u);
        for i in 0..n_seg {
            for k in 0..n_u {
                let row = start + i * n_u + k;
                asm.coeff(row, layout.idx_u(i + 1, k), 1.0);
                asm.coeff(row, layout.idx_u(i, k), -1.0);
            }
        }
        Some(start)
    } else {
        None
    };

    let zero_rows = asm.next_row;
    asm.cone(ConeBlock::Zero(zero_rows));
    RowLayout {
        init_start,
        dynamics_start,
        terminal_start,
        rate_equality_start,
        zero_rows,
    }
}

/// Norm cones `||u_i|| <= sigma_i`, one per vertex.
fn add_norm_cones(asm: &mut Assembler, layout: &VariableLayout) {
    for i in 0..layout.n_vertices() {
        let start = asm.rows(layout.n_u + 1);
        asm.coeff(start, layout.idx_sigma(i), -1.0);
        for k in 0..layout.n_u {
            asm.coeff(start + 1 + k, layout.idx_u(i, k), -1.0);
        }
        asm.cone(ConeBlock::SecondOrder(layout.n_u + 1));
    }
}

/// Builds the full conic form of the trajectory problem.
pub fn build_program(problem: &TrajectoryProblem) -> Result<ConicProgram> {
    problem.validate()?;
    let disc = &problem.disc;
    let n_seg = disc.n_segments;
    let n_vert = n_seg + 1;
    let n_u = disc.n_controls();

    let terminal_epigraph = problem.cost.terminal_weight > 0.0;
    let layout = VariableLayout {
        n_x: disc.n_states(),
        n_u,
        n_segments: n_seg,
        terminal_epigraph,
        extra_scalar: false,
    };

    let rate = problem.rate_bound;
    if let Some(delta) = rate {
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::validation("rate bound must be non-negative and finite"));
        }
    }
    let rate_as_equalities = rate.is_some_and(|d| d == 0.0);
    let rate_as_cones = rate.is_some_and(|d| d > 0.0);

    let mut asm = Assembler::new();
    let rows = add_equality_rows(&mut asm, problem, &layout, rate_as_equalities);

    // sigma box rows: sigma_i >= rho_eff and sigma_i <= rho_max.
    let box_start = asm.rows(2 * n_vert);
    for i in 0..n_vert {
        let lower = box_start + 2 * i;
        asm.coeff(lower, layout.idx_sigma(i), -1.0);
        asm.b[lower] = -problem.rho_eff;
        let upper = lower + 1;
        asm.coeff(upper, layout.idx_sigma(i), 1.0);
        asm.b[upper] = problem.rho_max;
    }
    asm.cone(ConeBlock::NonNegative(2 * n_vert));

    add_norm_cones(&mut asm, &layout);

    if rate_as_cones {
        let delta = rate.unwrap();
        for i in 0..n_seg {
            let start = asm.rows(n_u + 1);
            asm.b[start] = delta;
            for k in 0..n_u {
                asm.coeff(start + 1 + k, layout.idx_u(i + 1, k), -1.0);
                asm.coeff(start + 1 + k, layout.idx_u(i, k), 1.0);
            }
            asm.cone(ConeBlock::SecondOrder(n_u + 1));
        }
    }

    if terminal_epigraph {
        let n_x = layout.n_x;
        let start = asm.rows(n_x + 1);
        asm.coeff(start, layout.idx_terminal().unwrap(), -1.0);
        for k in 0..n_x {
            asm.coeff(start + 1 + k, layout.idx_x(n_seg, k), -1.0);
            asm.b[start + 1 + k] = -problem.cost.terminal_target[k];
        }
        asm.cone(ConeBlock::SecondOrder(n_x + 1));
    }

    let n_vars = layout.n_vars();
    let mut p_diag = vec![0.0; n_vars];
    let mut q = vec![0.0; n_vars];
    let running_cost_encoding = match problem.cost.running_kind {
        RunningCost::Quadratic => {
            for i in 0..n_vert {
                p_diag[layout.idx_sigma(i)] = 2.0 * problem.cost.quadrature_weights[i];
            }
            "quadratic objective".to_string()
        }
        RunningCost::Linear => {
            for i in 0..n_vert {
                q[layout.idx_sigma(i)] = problem.cost.quadrature_weights[i];
            }
            "linear objective".to_string()
        }
    };
    if let Some(idx) = layout.idx_terminal() {
        q[idx] = problem.cost.terminal_weight;
    }

    let meta = ProgramMeta {
        primary_variables: layout.n_primary(),
        auxiliary_variables: n_vars - layout.n_primary(),
        dynamics_blocks: n_seg,
        dynamics_rows: n_seg * layout.n_x,
        init_rows: layout.n_x,
        terminal_rows: problem.terminal_matrix.nrows(),
        rate_equality_rows: if rate_as_equalities { n_seg * n_u } else { 0 },
        sigma_bound_rows: 2 * n_vert,
        norm_cones: n_vert,
        rate_cones: if rate_as_cones { n_seg } else { 0 },
        terminal_cone: terminal_epigraph,
        running_cost_encoding,
    };

    Ok(ConicProgram {
        problem: problem.clone(),
        layout,
        rows,
        p_diag,
        q,
        a_triplets: asm.triplets,
        b: asm.b,
        cones: asm.cones,
        meta,
    })
}

/// Feasibility probe: maximize `t` such that the problem remains feasible
/// with every `sigma_i <= rho_max - t`. A positive optimum exhibits a
/// strictly feasible slack band.
pub fn build_margin_probe(problem: &TrajectoryProblem) -> Result<ConicProgram> {
    problem.validate()?;
    let disc = &problem.disc;
    let n_seg = disc.n_segments;
    let n_vert = n_seg + 1;

    let layout = VariableLayout {
        n_x: disc.n_states(),
        n_u: disc.n_controls(),
        n_segments: n_seg,
        terminal_epigraph: false,
        extra_scalar: true,
    };
    let t_idx = layout.idx_extra().unwrap();

    let mut asm = Assembler::new();
    let rows = add_equality_rows(&mut asm, problem, &layout, false);

    // t >= 0 keeps the probe a restriction: infeasibility of the original
    // slack band must surface as infeasibility, not as a negative margin.
    let box_start = asm.rows(2 * n_vert + 1);
    for i in 0..n_vert {
        let lower = box_start + 2 * i;
        asm.coeff(lower, layout.idx_sigma(i), -1.0);
        asm.b[lower] = -problem.rho_eff;
        let upper = lower + 1;
        asm.coeff(upper, layout.idx_sigma(i), 1.0);
        asm.coeff(upper, t_idx, 1.0);
        asm.b[upper] = problem.rho_max;
    }
    asm.coeff(box_start + 2 * n_vert, t_idx, -1.0);
    asm.cone(ConeBlock::NonNegative(2 * n_vert + 1));

    add_norm_cones(&mut asm, &layout);

    let n_vars = layout.n_vars();
    let mut q = vec![0.0; n_vars];
    q[t_idx] = -1.0;

    let meta = ProgramMeta {
        primary_variables: layout.n_primary(),
        auxiliary_variables: 1,
        dynamics_blocks: n_seg,
        dynamics_rows: n_seg * layout.n_x,
        init_rows: layout.n_x,
        terminal_rows: problem.terminal_matrix.nrows(),
        rate_equality_rows: 0,
        sigma_bound_rows: 2 * n_vert,
        norm_cones: n_vert,
        rate_cones: 0,
        terminal_cone: false,
        running_cost_encoding: "margin probe".to_string(),
    };

    Ok(ConicProgram {
        problem: problem.clone(),
        layout,
        rows,
        p_diag: vec![0.0; n_vars],
        q,
        a_triplets: asm.triplets,
        b: asm.b,
        cones: asm.cones,
        meta,
    })
}
