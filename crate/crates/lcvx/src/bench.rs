//! Double-integrator benchmark: a point mass steered by bounded
//! acceleration, minimizing control effort plus a terminal miss penalty.
//!
//! This problem exercises the full pipeline and pins the quantitative
//! targets the implementation is expected to reproduce: the rate-bound
//! value at 4.5, the redundancy of the rate constraint, the certified band
//! edges near 4.026 and 5.105, and search convergence near 4.098.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::certify::{certify, delta_bound, edge_min_norm};
use crate::discretization::{integrate_stm, rollout, ContinuousSystem, DEFAULT_SUBSTEPS};
use crate::error::Result;
use crate::program::{
    solve_problem, CostSpec, RunningCost, Solution, SolverSettings, TrajectoryProblem,
};
use crate::search::{
    probe_at, sweep, ternary_search, write_sweep_csv, ProbeClassification, SweepPoint,
};
use crate::spectra::{eigen_structure, perturb, sample_q, PerturbationSpec};

/// Default eigenvalue clustering tolerance for the perturbation pipeline.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-8;

/// How a benchmark target is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// `|actual - expected| <= tolerance`.
    WithinTolerance,
    /// `actual <= expected` (tolerance unused).
    AtMost,
}

/// One quantitative target with its expected value and tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchTarget {
    pub name: String,
    pub actual: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub kind: TargetKind,
    pub pass: bool,
}

impl BenchTarget {
    fn within(name: &str, actual: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            actual,
            expected,
            tolerance,
            kind: TargetKind::WithinTolerance,
            pass: (actual - expected).abs() <= tolerance,
        }
    }

    fn at_most(name: &str, actual: f64, bound: f64) -> Self {
        Self {
            name: name.to_string(),
            actual,
            expected: bound,
            tolerance: 0.0,
            kind: TargetKind::AtMost,
            pass: actual <= bound,
        }
    }
}

/// Scalar results and per-target pass/fail of a benchmark run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub delta_at_4_5: f64,
    pub max_control_jump_unconstrained: f64,
    pub rho_minus_est: f64,
    pub rho_plus_est: f64,
    pub converged_rho: f64,
    pub solver_calls: usize,
    pub vertex_violation_count: usize,
    pub edge_violation_count: usize,
    pub final_cost: f64,
    pub seed: u64,
    pub q: Vec<f64>,
    pub targets: Vec<BenchTarget>,
    pub all_pass: bool,
}

/// Knobs of a benchmark run.
#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub seed: u64,
    pub eps_a: f64,
    pub eps: f64,
    pub apply_perturbation: bool,
    pub settings: SolverSettings,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            eps_a: 1e-6,
            eps: 1e-3,
            apply_perturbation: true,
            settings: SolverSettings::default(),
        }
    }
}

/// The benchmark system: three position states driven by three velocity
/// states, with acceleration as the control.
pub fn double_integrator_system() -> ContinuousSystem {
    let mut a_c = DMatrix::zeros(6, 6);
    for k in 0..3 {
        a_c[(k, k + 3)] = 1.0;
    }
    let mut b_c = DMatrix::zeros(6, 3);
    for k in 0..3 {
        b_c[(k + 3, k)] = 1.0;
    }
    ContinuousSystem::new(a_c, b_c).expect("constant system data")
}

/// The benchmark problem: 16 segments over 4 seconds, control norms
/// bounded to [4, 6], quadratic running effort, and a terminal-norm
/// penalty of weight 100 toward position (10, 10, 10) at rest. The
/// terminal condition enters only through the cost; the hard terminal map
/// is empty.
pub fn double_integrator_problem() -> TrajectoryProblem {
    let sys = double_integrator_system();
    let disc = integrate_stm(&sys, 4.0, 16, DEFAULT_SUBSTEPS).expect("constant grid data");
    let dt = disc.dt;
    let target = DVector::from_vec(vec![10.0, 10.0, 10.0, 0.0, 0.0, 0.0]);
    TrajectoryProblem {
        disc,
        cost: CostSpec::trapezoid(100.0, target, RunningCost::Quadratic, 16, dt),
        rho_min: 4.0,
        rho_eff: 4.0,
        rho_max: 6.0,
        rate_bound: None,
        x_init: DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0, 10.0]),
        terminal_matrix: DMatrix::zeros(0, 6),
        terminal_offset: DVector::zeros(0),
    }
}

/// Replaces the dynamics matrix with its randomly perturbed version,
/// returning the new problem and the sampled shift.
pub fn apply_random_perturbation(
    problem: &TrajectoryProblem,
    eps_a: f64,
    seed: u64,
) -> Result<(TrajectoryProblem, PerturbationSpec)> {
    let structure = eigen_structure(&problem.disc.a, DEFAULT_CLUSTER_TOL)?;
    let spec = sample_q(structure.n_distinct(), eps_a, seed)?;
    let a_tilde = perturb(&structure, &spec.q)?;
    let mut perturbed = problem.clone();
    perturbed.disc = crate::discretization::DiscreteSystem::new(
        a_tilde,
        problem.disc.b0.clone(),
        problem.disc.b1.clone(),
        problem.disc.dt,
        problem.disc.n_segments,
        problem.disc.t_f,
    )?;
    Ok((perturbed, spec))
}

fn max_control_jump(solution: &Solution) -> f64 {
    solution
        .u
        .windows(2)
        .map(|w| (&w[1] - &w[0]).norm())
        .fold(0.0, f64::max)
}

/// Bisects a classification boundary to within `tol`, assuming `pred`
/// holds at `lo` and fails at `hi`.
fn bisect_boundary<F>(mut lo: f64, mut hi: f64, tol: f64, mut pred: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<bool>,
{
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Estimates the certified band edges from a coarse sweep refined by
/// bisection on the observed classification transitions.
pub fn estimate_brackets(
    problem: &TrajectoryProblem,
    settings: &SolverSettings,
) -> Result<(f64, f64, Vec<SweepPoint>)> {
    let step = 0.1;
    let mut grid = Vec::new();
    let mut rho = problem.rho_min;
    while rho < problem.rho_max - 1e-9 {
        grid.push(rho);
        rho += step;
    }
    let points = sweep(problem, &grid, settings)?;

    let classification_at = |rho: f64| -> Result<ProbeClassification> {
        Ok(probe_at(problem, rho, settings)?.classification)
    };

    let classes: Vec<Option<ProbeClassification>> = points
        .iter()
        .map(|p| p.probe.as_ref().ok().map(|o| o.classification))
        .collect();

    // Lower edge: last too_low grid point before the first non-too_low one.
    let first_ok = classes
        .iter()
        .position(|c| !matches!(c, Some(ProbeClassification::TooLow)));
    let rho_minus = match first_ok {
        Some(0) | None => problem.rho_min,
        Some(i) => bisect_boundary(grid[i - 1], grid[i], 2e-3, |rho| {
            Ok(classification_at(rho)? == ProbeClassification::TooLow)
        })?,
    };

    // Upper edge: first eta_zero grid point after the last non-eta_zero one.
    let first_zero = classes
        .iter()
        .position(|c| matches!(c, Some(ProbeClassification::EtaZero)));
    let rho_plus = match first_zero {
        None => problem.rho_max,
        Some(0) => problem.rho_min,
        Some(i) => bisect_boundary(grid[i - 1], grid[i], 2e-3, |rho| {
            Ok(classification_at(rho)? != ProbeClassification::EtaZero)
        })?,
    };

    Ok((rho_minus, rho_plus, points))
}

/// Writes vertex states as `t, x1..xn` rows.
pub fn write_trajectory_csv<P: AsRef<Path>>(path: P, dt: f64, x: &[DVector<f64>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let n_x = x.first().map(|v| v.len()).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n_x).map(|k| format!("x{k}")));
    writer.write_record(&header)?;
    for (i, xi) in x.iter().enumerate() {
        let mut row = vec![format!("{}", i as f64 * dt)];
        row.extend(xi.iter().map(|v| format!("{v}")));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes vertex controls as `t, u1..um, norm, edge_min_norm` rows, where
/// the last column is the minimum interpolated norm toward the next vertex
/// (empty on the final row).
pub fn write_controls_csv<P: AsRef<Path>>(path: P, dt: f64, u: &[DVector<f64>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let n_u = u.first().map(|v| v.len()).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n_u).map(|k| format!("u{k}")));
    header.push("norm".to_string());
    header.push("edge_min_norm".to_string());
    writer.write_record(&header)?;
    for (i, ui) in u.iter().enumerate() {
        let mut row = vec![format!("{}", i as f64 * dt)];
        row.extend(ui.iter().map(|v| format!("{v}")));
        row.push(format!("{}", ui.norm()));
        if i + 1 < u.len() {
            row.push(format!("{}", edge_min_norm(ui, &u[i + 1])));
        } else {
            row.push(String::new());
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Runs the full benchmark: the rate-redundancy measurement, the band
/// estimate, the bound search, certification of the returned solution, and
/// the perturbation-robustness checks. Data files land in `out_dir`.
pub fn run_benchmark<P: AsRef<Path>>(out_dir: P, options: &BenchOptions) -> Result<BenchReport> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let settings = &options.settings;

    let base = double_integrator_problem();
    let (problem, pert) = if options.apply_perturbation {
        apply_random_perturbation(&base, options.eps_a, options.seed)?
    } else {
        (
            base.clone(),
            PerturbationSpec { q: vec![], eps_a: options.eps_a, seed: options.seed },
        )
    };

    // (a) Rate-constraint redundancy at 4.5 and along the grid above it.
    let delta_at_4_5 = delta_bound(4.5, problem.rho_min)?;
    let unconstrained = solve_problem(
        &problem.with_rho_eff(4.5).with_rate_bound(None),
        settings,
    )?;
    unconstrained.require_optimal()?;
    let max_jump = max_control_jump(&unconstrained);

    let mut worst_redundancy_margin = f64::NEG_INFINITY;
    let mut rho = 4.5;
    while rho <= problem.rho_max + 1e-9 {
        let sol = solve_problem(&problem.with_rho_eff(rho).with_rate_bound(None), settings)?;
        sol.require_optimal()?;
        let margin = max_control_jump(&sol) - delta_bound(rho, problem.rho_min)?;
        worst_redundancy_margin = worst_redundancy_margin.max(margin);
        rho += 0.25;
    }

    // (b) Certified-band edges from a sweep plus bisection refinement.
    let (rho_minus, rho_plus, sweep_points) = estimate_brackets(&problem, settings)?;
    write_sweep_csv(&sweep_points, out_dir.join("sweep.csv"))?;

    // (c) The bound search at the requested resolution.
    let (final_solution, trace) = ternary_search(&problem, options.eps, settings)?;
    crate::search::write_trace_json(&trace, out_dir.join("trace.json"))?;

    // (d) Certification of the returned solution at an absolute tolerance.
    let report = certify(&final_solution, problem.rho_min, problem.rho_max, 1e-4)?;
    write_trajectory_csv(out_dir.join("trajectory.csv"), problem.disc.dt, &final_solution.x)?;
    write_controls_csv(out_dir.join("controls.csv"), problem.disc.dt, &final_solution.u)?;

    // Perturbation robustness: cost shift against the unperturbed problem
    // and the terminal defect of replaying the perturbed controls through
    // the unperturbed dynamics.
    let reference = solve_problem(
        &base.with_rho_eff(4.5).with_rate_bound(Some(delta_at_4_5)),
        settings,
    )?;
    reference.require_optimal()?;
    let perturbed_ref = solve_problem(
        &problem.with_rho_eff(4.5).with_rate_bound(Some(delta_at_4_5)),
        settings,
    )?;
    perturbed_ref.require_optimal()?;
    let cost_shift = (perturbed_ref.cost - reference.cost).abs();
    let replay = rollout(&base.disc, &base.x_init, &perturbed_ref.u)?;
    let terminal_defect = if base.n_terminal_rows() > 0 {
        (&base.terminal_matrix * replay.last().unwrap() + &base.terminal_offset).norm()
    } else {
        0.0
    };

    let n_x = problem.disc.n_states();
    let targets = vec![
        BenchTarget::within("delta_at_4_5", delta_at_4_5, 4.1231, 1e-3),
        BenchTarget::within("max_control_jump_unconstrained", max_jump, 3.322, 0.05),
        BenchTarget::within("rho_minus_est", rho_minus, 4.026, 0.05),
        BenchTarget::within("rho_plus_est", rho_plus, 5.105, 0.05),
        BenchTarget::within("converged_rho", trace.final_rho, 4.098, 0.05),
        BenchTarget::at_most("solver_calls", trace.solver_calls as f64, 39.0),
        BenchTarget::at_most(
            "vertex_violations",
            report.n_vertex_violations() as f64,
            (n_x + 1) as f64,
        ),
        BenchTarget::at_most(
            "edge_violations",
            report.n_edge_violations() as f64,
            (2 * n_x + 2) as f64,
        ),
        BenchTarget::at_most("rate_redundancy_margin", worst_redundancy_margin, 0.0),
        BenchTarget::at_most("perturbed_cost_shift", cost_shift, 1e-3),
        BenchTarget::at_most("perturbation_rollout_defect", terminal_defect, 1e-3),
    ];
    let all_pass = targets.iter().all(|t| t.pass);

    let bench_report = BenchReport {
        delta_at_4_5,
        max_control_jump_unconstrained: max_jump,
        rho_minus_est: rho_minus,
        rho_plus_est: rho_plus,
        converged_rho: trace.final_rho,
        solver_calls: trace.solver_calls,
        vertex_violation_count: report.n_vertex_violations(),
        edge_violation_count: report.n_edge_violations(),
        final_cost: final_solution.cost,
        seed: options.seed,
        q: pert.q,
        targets,
        all_pass,
    };

    let json = serde_json::to_string_pretty(&bench_report)?;
    std::fs::write(out_dir.join("report.json"), json + "\n")?;
    Ok(bench_report)
}

/// Result of the piecewise-constant baseline comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZohCompareReport {
    pub zoh_cost: f64,
    pub foh_cost: f64,
    pub zoh_control_count: usize,
    pub foh_control_count: usize,
    pub zoh_terminal_position_error: f64,
    pub foh_terminal_position_error: f64,
}

fn terminal_position_error(solution: &Solution, target: &DVector<f64>) -> f64 {
    let last = solution.x.last().expect("nonempty trajectory");
    (last.rows(0, 3) - target.rows(0, 3)).norm()
}

/// Solves the piecewise-constant baseline (one control per segment, no
/// rate constraint, no bound search) next to the piecewise-linear single
/// solve, writing both trajectories and control magnitudes for
/// side-by-side plots.
pub fn compare_zoh<P: AsRef<Path>>(out_dir: P, settings: &SolverSettings) -> Result<ZohCompareReport> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let base = double_integrator_problem();
    let target = base.cost.terminal_target.clone();

    // Piecewise-constant run: same grid with B0 the hold response and
    // B1 = 0, so the trailing control vertex is inert. Its slack weight is
    // zeroed and the phantom control dropped from the outputs; the running
    // cost becomes the exact rectangle sum over segments.
    let sys = double_integrator_system();
    let (a_z, b_z) = crate::discretization::discretize_zoh(&sys, base.disc.t_f, base.disc.n_segments)?;
    let n_seg = base.disc.n_segments;
    let dt = base.disc.dt;
    let disc_z = crate::discretization::DiscreteSystem::new(
        a_z,
        b_z,
        DMatrix::zeros(6, 3),
        dt,
        n_seg,
        base.disc.t_f,
    )?;
    let mut weights = vec![dt; n_seg + 1];
    weights[n_seg] = 0.0;
    let zoh_problem = TrajectoryProblem {
        disc: disc_z,
        cost: CostSpec {
            terminal_weight: base.cost.terminal_weight,
            terminal_target: target.clone(),
            running_kind: RunningCost::Quadratic,
            quadrature_weights: weights,
        },
        ..base.clone()
    };
    let zoh_solution = solve_problem(&zoh_problem, settings)?;
    zoh_solution.require_optimal()?;
    let zoh_controls: Vec<DVector<f64>> = zoh_solution.u[..n_seg].to_vec();

    // Piecewise-linear single solve at the original bound for comparison.
    let foh_solution = solve_problem(&base, settings)?;
    foh_solution.require_optimal()?;

    write_trajectory_csv(out_dir.join("zoh_trajectory.csv"), dt, &zoh_solution.x)?;
    write_controls_csv(out_dir.join("zoh_controls.csv"), dt, &zoh_controls)?;
    write_trajectory_csv(out_dir.join("foh_trajectory.csv"), dt, &foh_solution.x)?;
    write_controls_csv(out_dir.join("foh_controls.csv"), dt, &foh_solution.u)?;

    Ok(ZohCompareReport {
        zoh_cost: zoh_solution.cost,
        foh_cost: foh_solution.cost,
        zoh_control_count: zoh_controls.len(),
        foh_control_count: foh_solution.u.len(),
        zoh_terminal_position_error: terminal_position_error(&zoh_solution, &target),
        foh_terminal_position_error: terminal_position_error(&foh_solution, &target),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn problem_constants() {
        let p = double_integrator_problem();
        assert_eq!((p.rho_min, p.rho_max), (4.0, 6.0));
        assert_eq!(p.x_init.as_slice(), &[0.0, 0.0, 0.0, 0.0, 0.0, 10.0]);
        assert_abs_diff_eq!(
            p.disc.n_segments as f64 * p.disc.dt,
            4.0,
            epsilon = 1e-12
        );
        assert_eq!(p.n_terminal_rows(), 0);
        p.validate().unwrap();
    }

    #[test]
    fn perturbation_is_tiny_and_reproducible() {
        let base = double_integrator_problem();
        let (p1, s1) = apply_random_perturbation(&base, 1e-6, 7).unwrap();
        let (p2, s2) = apply_random_perturbation(&base, 1e-6, 7).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(p1.disc.a, p2.disc.a);
        assert_eq!(s1.q.len(), 1);
        let shift = (&p1.disc.a - &base.disc.a).amax();
        assert!(shift <= 1e-6 + 1e-12);
    }
}
