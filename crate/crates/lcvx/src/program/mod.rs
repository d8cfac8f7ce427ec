//! The convexified discrete trajectory problem and its conic solution.
//!
//! `build_program` lowers a [`TrajectoryProblem`] to second-order-cone
//! form; `solve` runs a pluggable conic backend and lifts the result back
//! into trajectories and the dual variables of the dynamics equalities.

mod backend;
mod conic;

pub use backend::{ClarabelBackend, ConicSolver, RawConicSolution};
pub use conic::{build_program, ConeBlock, ConicProgram, ProgramMeta, RowLayout, VariableLayout};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discretization::{check_controllability, DiscreteSystem};
use crate::error::{Error, Result};

/// Shape of the per-vertex running cost term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunningCost {
    Linear,
    Quadratic,
}

/// Cost specification: a weighted terminal-norm term plus a quadrature sum
/// of per-vertex running terms on the slack variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub terminal_weight: f64,
    pub terminal_target: DVector<f64>,
    pub running_kind: RunningCost,
    /// One weight per vertex; the running cost is `sum_i w_i * l(sigma_i)`.
    pub quadrature_weights: Vec<f64>,
}

impl CostSpec {
    /// Trapezoid quadrature of the running integral: `dt/2` at the two end
    /// vertices, `dt` in the interior.
    pub fn trapezoid(
        terminal_weight: f64,
        terminal_target: DVector<f64>,
        running_kind: RunningCost,
        n_segments: usize,
        dt: f64,
    ) -> Self {
        let n_vert = n_segments + 1;
        let mut w = vec![dt; n_vert];
        w[0] = dt / 2.0;
        w[n_vert - 1] = dt / 2.0;
        Self {
            terminal_weight,
            terminal_target,
            running_kind,
            quadrature_weights: w,
        }
    }

    fn validate(&self, n_x: usize, n_vertices: usize) -> Result<()> {
        if !self.terminal_weight.is_finite() || self.terminal_weight < 0.0 {
            return Err(Error::validation("terminal weight must be non-negative"));
        }
        if self.terminal_weight > 0.0 && self.terminal_target.len() != n_x {
            return Err(Error::validation("terminal target dimension mismatch"));
        }
        if self.quadrature_weights.len() != n_vertices {
            return Err(Error::validation(format!(
                "expected {} quadrature weights, got {}",
                n_vertices,
                self.quadrature_weights.len()
            )));
        }
        if self
            .quadrature_weights
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::validation("quadrature weights must be finite and non-negative"));
        }
        let running_active = self.quadrature_weights.iter().any(|w| *w > 0.0);
        if self.terminal_weight == 0.0 && !running_active {
            return Err(Error::validation("cost has neither terminal nor running term"));
        }
        Ok(())
    }
}

/// A discrete annulus-bounded control problem ready for convex solution.
///
/// `rho_eff` is the effective slack lower bound; raising it above
/// `rho_min` buys room for the control rate constraint `rate_bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryProblem {
    pub disc: DiscreteSystem,
    pub cost: CostSpec,
    pub rho_min: f64,
    pub rho_eff: f64,
    pub rho_max: f64,
    pub rate_bound: Option<f64>,
    pub x_init: DVector<f64>,
    /// Affine terminal map `G(x) = terminal_matrix * x + terminal_offset`,
    /// constrained to zero. May have zero rows.
    pub terminal_matrix: DMatrix<f64>,
    pub terminal_offset: DVector<f64>,
}

impl TrajectoryProblem {
    pub fn validate(&self) -> Result<()> {
        let n_x = self.disc.n_states();
        if !self.rho_min.is_finite() || self.rho_min <= 0.0 {
            return Err(Error::validation("rho_min must be positive"));
        }
        if !self.rho_max.is_finite() || self.rho_min >= self.rho_max {
            return Err(Error::validation(format!(
                "rho_min = {} must be below rho_max = {}",
                self.rho_min, self.rho_max
            )));
        }
        if !self.rho_eff.is_finite() || self.rho_eff < self.rho_min || self.rho_eff > self.rho_max {
            return Err(Error::validation(format!(
                "rho_eff = {} must lie in [{}, {}]",
                self.rho_eff, self.rho_min, self.rho_max
            )));
        }
        if let Some(delta) = self.rate_bound {
            if !delta.is_finite() || delta < 0.0 {
                return Err(Error::validation("rate bound must be non-negative and finite"));
            }
        }
        if self.x_init.len() != n_x {
            return Err(Error::validation("x_init dimension mismatch"));
        }
        if self.terminal_matrix.nrows() != self.terminal_offset.len() {
            return Err(Error::validation("terminal map row mismatch"));
        }
        if self.terminal_matrix.nrows() > 0 && self.terminal_matrix.ncols() != n_x {
            return Err(Error::validation("terminal map column mismatch"));
        }
        if self.x_init.iter().any(|v| !v.is_finite())
            || self.terminal_matrix.iter().any(|v| !v.is_finite())
            || self.terminal_offset.iter().any(|v| !v.is_finite())
        {
            return Err(Error::validation("boundary data must be finite"));
        }
        self.cost.validate(n_x, self.disc.n_vertices())?;
        Ok(())
    }

    /// Copy of the problem with a different effective lower bound.
    pub fn with_rho_eff(&self, rho_eff: f64) -> Self {
        Self { rho_eff, ..self.clone() }
    }

    /// Copy of the problem with a different rate bound.
    pub fn with_rate_bound(&self, rate_bound: Option<f64>) -> Self {
        Self { rate_bound, ..self.clone() }
    }

    pub fn n_terminal_rows(&self) -> usize {
        self.terminal_matrix.nrows()
    }

    /// Total cost of a candidate trajectory under this problem's cost spec.
    pub fn cost_of(&self, x: &[DVector<f64>], sigma: &[f64]) -> f64 {
        let mut total = 0.0;
        if self.cost.terminal_weight > 0.0 {
            let last = x.last().expect("nonempty trajectory");
            total += self.cost.terminal_weight * (last - &self.cost.terminal_target).norm();
        }
        for (w, s) in self.cost.quadrature_weights.iter().zip(sigma) {
            total += match self.cost.running_kind {
                RunningCost::Linear => w * s,
                RunningCost::Quadratic => w * s * s,
            };
        }
        total
    }
}

/// Terminal state of a solve attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Tolerances and limits handed to the conic backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Feasibility tolerance for the backend and for solution validation.
    pub feas_tol: f64,
    /// Duality-gap tolerance for the backend.
    pub gap_tol: f64,
    /// Relative threshold deciding when the terminal dynamics multiplier
    /// counts as nonzero.
    pub eta_threshold: f64,
    /// Absolute band tolerance for annulus certification; defaults to
    /// `1e-4 * rho_max` of the problem at hand when unset.
    pub violation_tol: Option<f64>,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            eta_threshold: 1e-5,
            violation_tol: None,
            max_iter: 200,
            verbose: false,
        }
    }
}

impl SolverSettings {
    /// Loosened copy used for one retry after a numerical failure.
    pub fn relaxed(&self) -> Self {
        Self {
            feas_tol: self.feas_tol * 1e3,
            gap_tol: self.gap_tol * 1e3,
            max_iter: self.max_iter * 2,
            ..self.clone()
        }
    }
}

/// Plain-array JSON for solution vectors, so stored solutions can be
/// written and read by hand.
mod serde_vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

mod serde_vector_list {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = v.iter().map(|x| x.as_slice()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Ok(rows.into_iter().map(DVector::from_vec).collect())
    }
}

/// Primal-dual solution of a trajectory program.
///
/// `eta[i]` multiplies the dynamics equality of segment `i`; `mu1` the
/// initial condition; `mu2` the affine terminal map. The extraction keeps
/// the convention in which the stationarity relations read
/// `eta_{i-1} = A' eta_i` and
/// `eta_N = grad m(x_{N+1}) + G' mu2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    #[serde(with = "serde_vector_list")]
    pub x: Vec<DVector<f64>>,
    #[serde(with = "serde_vector_list")]
    pub u: Vec<DVector<f64>>,
    pub sigma: Vec<f64>,
    #[serde(with = "serde_vector_list")]
    pub eta: Vec<DVector<f64>>,
    #[serde(with = "serde_vector")]
    pub mu1: DVector<f64>,
    #[serde(with = "serde_vector")]
    pub mu2: DVector<f64>,
    pub cost: f64,
    pub status: SolveStatus,
    /// Relative duality gap reported by the backend.
    pub duality_gap: f64,
    /// Terminal cost weight, the scale for terminal-dual thresholds.
    pub terminal_weight: f64,
    pub solver_iterations: u32,
    /// Backend status string for post-mortems.
    pub raw_status: String,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn require_optimal(&self) -> Result<()> {
        if self.is_optimal() {
            Ok(())
        } else {
            Err(Error::SolveFailed { status: self.status })
        }
    }

    /// Largest entry magnitude across all dynamics multipliers.
    pub fn eta_inf_norm(&self) -> f64 {
        self.eta
            .iter()
            .flat_map(|e| e.iter())
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    pub fn n_vertices(&self) -> usize {
        self.u.len()
    }

    /// Norms of the control vectors, one per vertex.
    pub fn control_norms(&self) -> Vec<f64> {
        self.u.iter().map(|u| u.norm()).collect()
    }
}

fn empty_solution(status: SolveStatus, raw: &RawConicSolution, terminal_weight: f64) -> Solution {
    Solution {
        x: Vec::new(),
        u: Vec::new(),
        sigma: Vec::new(),
        eta: Vec::new(),
        mu1: DVector::zeros(0),
        mu2: DVector::zeros(0),
        cost: f64::NAN,
        status,
        duality_gap: f64::NAN,
        terminal_weight,
        solver_iterations: raw.iterations,
        raw_status: raw.raw_status.clone(),
    }
}

/// Solves the program with a caller-supplied backend.
pub fn solve_with(
    backend: &dyn ConicSolver,
    program: &ConicProgram,
    settings: &SolverSettings,
) -> Result<Solution> {
    let raw = backend.solve_conic(program, settings)?;
    let terminal_weight = program.problem.cost.terminal_weight;
    if raw.status != SolveStatus::Optimal {
        return Ok(empty_solution(raw.status, &raw, terminal_weight));
    }

    let layout = &program.layout;
    let rows = &program.rows;
    let n_x = layout.n_x;
    let n_u = layout.n_u;
    let n_vert = layout.n_vertices();
    let n_seg = layout.n_segments;

    let x: Vec<DVector<f64>> = (0..n_vert)
        .map(|i| DVector::from_fn(n_x, |k, _| raw.primal[layout.idx_x(i, k)]))
        .collect();
    let u: Vec<DVector<f64>> = (0..n_vert)
        .map(|i| DVector::from_fn(n_u, |k, _| raw.primal[layout.idx_u(i, k)]))
        .collect();
    let sigma: Vec<f64> = (0..n_vert).map(|i| raw.primal[layout.idx_sigma(i)]).collect();

    let eta: Vec<DVector<f64>> = (0..n_seg)
        .map(|i| DVector::from_fn(n_x, |k, _| raw.dual[rows.dynamics_start + i * n_x + k]))
        .collect();
    let mu1 = DVector::from_fn(n_x, |k, _| raw.dual[rows.init_start + k]);
    let n_g = program.problem.n_terminal_rows();
    let mu2 = DVector::from_fn(n_g, |k, _| raw.dual[rows.terminal_start + k]);

    let gap_scale = raw.obj_val.abs().max(1.0);
    let duality_gap = (raw.obj_val - raw.obj_val_dual).abs() / gap_scale;

    let mut solution = Solution {
        x,
        u,
        sigma,
        eta,
        mu1,
        mu2,
        cost: raw.obj_val,
        status: SolveStatus::Optimal,
        duality_gap,
        terminal_weight,
        solver_iterations: raw.iterations,
        raw_status: raw.raw_status,
    };

    validate_optimal(program, settings, &raw.primal, &mut solution);
    Ok(solution)
}

/// Solves the program with the default backend.
pub fn solve(program: &ConicProgram, settings: &SolverSettings) -> Result<Solution> {
    solve_with(&ClarabelBackend, program, settings)
}

/// Convenience: build and solve in one step.
pub fn solve_problem(problem: &TrajectoryProblem, settings: &SolverSettings) -> Result<Solution> {
    let program = build_program(problem)?;
    solve(&program, settings)
}

/// Downgrades an "optimal" answer that does not actually meet the claimed
/// tolerances. The checks are scaled by the data magnitude; backends report
/// convergence in scaled norms.
fn validate_optimal(
    program: &ConicProgram,
    settings: &SolverSettings,
    primal: &[f64],
    solution: &mut Solution,
) {
    let problem = &program.problem;
    let scale = 1.0
        + primal.iter().map(|v| v.abs()).fold(0.0, f64::max)
        + program.b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let feas = settings.feas_tol * scale * 10.0;

    let eq_residual = program
        .equality_residual(primal)
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);

    let mut ok = eq_residual <= feas;
    for (ui, si) in solution.u.iter().zip(&solution.sigma) {
        ok &= ui.norm() <= si + feas;
        ok &= *si >= problem.rho_eff - feas;
        ok &= *si <= problem.rho_max + feas;
    }
    ok &= solution.duality_gap <= settings.gap_tol * 10.0;

    if !ok {
        solution.status = SolveStatus::NumericalFailure;
        solution.raw_status = format!(
            "{} (post-check failed: eq_residual {:.3e}, gap {:.3e})",
            solution.raw_status, eq_residual, solution.duality_gap
        );
    }
}

/// Machine-checkable parts of the standing assumptions, reported rather
/// than enforced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub equality_rows: usize,
    pub equality_rank: usize,
    pub equality_full_row_rank: bool,
    pub controllability_rank: usize,
    pub controllable: bool,
    pub slater_status: SolveStatus,
    /// Best achievable uniform margin `rho_max - sigma_i`; positive means a
    /// strictly feasible slack band exists.
    pub slater_margin: Option<f64>,
    /// The nonzero-control-at-optimum assumption has no finite certificate.
    pub nonzero_control_assumption: String,
}

/// Rank of the stacked equality Jacobian over the full decision vector
/// `(x, u, sigma)`.
fn equality_jacobian_rank(problem: &TrajectoryProblem) -> (usize, usize) {
    let disc = &problem.disc;
    let n_x = disc.n_states();
    let n_u = disc.n_controls();
    let n_seg = disc.n_segments;
    let n_vert = n_seg + 1;
    let n_g = problem.n_terminal_rows();
    let n_rows = n_x + n_seg * n_x + n_g;
    let n_cols = n_vert * (n_x + n_u + 1);

    let mut h = DMatrix::<f64>::zeros(n_rows, n_cols);
    let idx_x = |i: usize, k: usize| i * n_x + k;
    let idx_u = |i: usize, k: usize| n_vert * n_x + i * n_u + k;
    for k in 0..n_x {
        h[(k, idx_x(0, k))] = 1.0;
    }
    for i in 0..n_seg {
        for k in 0..n_x {
            let row = n_x + i * n_x + k;
            for j in 0..n_x {
                h[(row, idx_x(i, j))] += disc.a[(k, j)];
            }
            h[(row, idx_x(i + 1, k))] -= 1.0;
            for j in 0..n_u {
                h[(row, idx_u(i, j))] += disc.b0[(k, j)];
                h[(row, idx_u(i + 1, j))] += disc.b1[(k, j)];
            }
        }
    }
    for k in 0..n_g {
        for j in 0..n_x {
            h[(n_x + n_seg * n_x + k, idx_x(n_seg, j))] = problem.terminal_matrix[(k, j)];
        }
    }

    let svd = h.svd(false, false);
    let smax = svd.singular_values.max();
    let tol = n_rows.max(n_cols) as f64 * f64::EPSILON * smax;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    (rank, n_rows)
}

/// Reports the equality-Jacobian rank, the controllability rank, and a
/// strict-feasibility margin probe.
pub fn assumption_diagnostics(problem: &TrajectoryProblem) -> Result<AssumptionReport> {
    problem.validate()?;
    let (rank, n_rows) = equality_jacobian_rank(problem);
    let (ctrl_rank, controllable) = check_controllability(&problem.disc);

    let probe = conic::build_margin_probe(problem)?;
    let settings = SolverSettings::default();
    let raw = ClarabelBackend.solve_conic(&probe, &settings)?;
    let margin = if raw.status == SolveStatus::Optimal {
        probe.layout.idx_extra().map(|idx| raw.primal[idx])
    } else {
        None
    };

    Ok(AssumptionReport {
        equality_rows: n_rows,
        equality_rank: rank,
        equality_full_row_rank: rank == n_rows,
        controllability_rank: ctrl_rank,
        controllable,
        slater_status: raw.status,
        slater_margin: margin,
        nonzero_control_assumption:
            "not machine-checkable: requires knowledge of every optimal trajectory".to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    /// One-segment integrator chain: `xdot = u` with dt = 1 gives
    /// A = 1, B0 = B1 = 1/2. The terminal map pins x_2 = 1.
    pub(crate) fn scalar_chain() -> TrajectoryProblem {
        let disc = DiscreteSystem::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 0.5),
            1.0,
            1,
            1.0,
        )
        .unwrap();
        TrajectoryProblem {
            disc,
            cost: CostSpec {
                terminal_weight: 0.0,
                terminal_target: DVector::zeros(1),
                running_kind: RunningCost::Quadratic,
                quadrature_weights: vec![0.5, 0.5],
            },
            rho_min: 0.5,
            rho_eff: 0.5,
            rho_max: 10.0,
            rate_bound: None,
            x_init: DVector::zeros(1),
            terminal_matrix: DMatrix::from_element(1, 1, 1.0),
            terminal_offset: dvector![-1.0],
        }
    }

    #[test]
    fn scalar_chain_solves_to_known_optimum() {
        // Hand oracle: x_2 = (u_1 + u_2)/2 = 1, cost = (max(0.5,|u_1|)^2
        // + max(0.5,|2-u_1|)^2)/2, minimized at u_1 = 1 with value 1.
        let problem = scalar_chain();
        let solution = solve_problem(&problem, &SolverSettings::default()).unwrap();
        solution.require_optimal().unwrap();
        assert_abs_diff_eq!(solution.u[0][0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(solution.u[1][0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(solution.sigma[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(solution.sigma[1], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(solution.cost, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(solution.x[1][0], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn scalar_chain_dual_convention() {
        // Hand KKT oracle: minimizing the partial Lagrangian
        // 0.5 sigma_i^2 + 0.5 eta u_i over the cone ||u_i|| <= sigma_i
        // forces u_i = -sign(eta) sigma_i and sigma_i = -eta/2, so the
        // optimal sigma = 1 pins eta = -2. With no terminal-norm cost the
        // terminal stationarity relation collapses to eta_N = G' mu2.
        let problem = scalar_chain();
        let solution = solve_problem(&problem, &SolverSettings::default()).unwrap();
        solution.require_optimal().unwrap();
        assert_abs_diff_eq!(solution.eta[0][0], -2.0, epsilon = 1e-5);
        assert_abs_diff_eq!(solution.mu2[0], -2.0, epsilon = 1e-5);
        assert_abs_diff_eq!(solution.eta[0][0], solution.mu2[0], epsilon = 1e-6);
    }

    #[test]
    fn objective_matches_recomputed_cost() {
        let problem = scalar_chain();
        let solution = solve_problem(&problem, &SolverSettings::default()).unwrap();
        let recomputed = problem.cost_of(&solution.x, &solution.sigma);
        assert_abs_diff_eq!(solution.cost, recomputed, epsilon = 1e-6);
    }

    #[test]
    fn rho_ordering_is_validated_before_solving() {
        let mut problem = scalar_chain();
        problem.rho_eff = 20.0;
        assert!(matches!(
            build_program(&problem),
            Err(Error::Validation(_))
        ));
        problem.rho_eff = 0.5;
        problem.rho_max = 0.4;
        assert!(matches!(
            build_program(&problem),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn infeasible_terminal_is_reported_not_hidden() {
        let mut problem = scalar_chain();
        // u_1 + u_2 = 2 cannot hold with |u_i| <= 0.4.
        problem.rho_min = 0.1;
        problem.rho_eff = 0.1;
        problem.rho_max = 0.4;
        let solution = solve_problem(&problem, &SolverSettings::default()).unwrap();
        assert_eq!(solution.status, SolveStatus::Infeasible);
        assert!(solution.require_optimal().is_err());
    }

    #[test]
    fn zero_rate_bound_freezes_controls() {
        let mut problem = scalar_chain();
        problem.rate_bound = Some(0.0);
        let program = build_program(&problem).unwrap();
        assert_eq!(program.meta.rate_cones, 0);
        assert_eq!(program.meta.rate_equality_rows, 1);
        let solution = solve(&program, &SolverSettings::default()).unwrap();
        solution.require_optimal().unwrap();
        assert_abs_diff_eq!(solution.u[0][0], solution.u[1][0], epsilon = 1e-8);
    }

    #[test]
    fn counting_for_benchmark_problem() {
        // Counting oracle: 17 vertices of (6 states + 3 controls + 1
        // slack) = 170 primary variables; 16 dynamics blocks of 6 rows;
        // one norm cone per vertex; one rate cone per segment.
        let problem = crate::bench::double_integrator_problem()
            .with_rho_eff(4.5)
            .with_rate_bound(Some(1.0));
        let program = build_program(&problem).unwrap();
        assert_eq!(program.meta.primary_variables, 170);
        assert_eq!(program.meta.dynamics_blocks, 16);
        assert_eq!(program.meta.dynamics_rows, 96);
        assert_eq!(program.meta.norm_cones, 17);
        assert_eq!(program.meta.rate_cones, 16);
        assert_eq!(program.meta.terminal_rows, 0);
        assert_eq!(program.meta.running_cost_encoding, "quadratic objective");

        let no_rate = build_program(&problem.with_rate_bound(None)).unwrap();
        assert_eq!(no_rate.meta.rate_cones, 0);
        assert_eq!(no_rate.meta.rate_equality_rows, 0);
    }

    #[test]
    fn counting_for_scalar_chain() {
        let program = build_program(&scalar_chain()).unwrap();
        // Two equality rows (init + one dynamics row) plus the terminal
        // boundary row.
        assert_eq!(program.meta.init_rows + program.meta.dynamics_rows, 2);
        assert_eq!(program.meta.terminal_rows, 1);
        assert_eq!(program.rows.zero_rows, 3);
    }

    #[test]
    fn diagnostics_on_scalar_chain() {
        let problem = scalar_chain();
        let report = assumption_diagnostics(&problem).unwrap();
        assert!(report.equality_full_row_rank);
        assert!(report.controllable);
        assert_eq!(report.slater_status, SolveStatus::Optimal);
        // sigma can sit at ||u|| = 1 for the feasible point u_1 = u_2 = 1,
        // so the margin reaches rho_max - 1 = 9.
        assert!(report.slater_margin.unwrap() > 0.0);
        assert_abs_diff_eq!(report.slater_margin.unwrap(), 9.0, epsilon = 1e-5);
    }

    #[test]
    fn diagnostics_flag_duplicate_terminal_rows() {
        let mut problem = scalar_chain();
        problem.terminal_matrix = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        problem.terminal_offset = dvector![-1.0, -1.0];
        let report = assumption_diagnostics(&problem).unwrap();
        assert!(!report.equality_full_row_rank);
        assert_eq!(report.equality_rank, report.equality_rows - 1);
    }

    #[test]
    fn diagnostics_flag_infeasible_margin_probe() {
        let mut problem = scalar_chain();
        problem.rho_min = 0.1;
        problem.rho_eff = 0.1;
        problem.rho_max = 0.4;
        let report = assumption_diagnostics(&problem).unwrap();
        assert_eq!(report.slater_status, SolveStatus::Infeasible);
        assert!(report.slater_margin.is_none());
    }
}
