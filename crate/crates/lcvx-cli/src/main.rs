//! Command-line front end for the trajectory convexification pipeline.
//!
//! Subcommands cover each stage: `discretize` (hold matrices), `solve`
//! (one conic solve), `search` (the full perturb + rate-bound + ternary
//! pipeline), `sweep` (classified probes over a grid), `certify` (annulus
//! check of a stored solution), and `bench` (the double-integrator study).
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 solver
//! failure, 5 certification failure.

mod config;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;

use config::{ProblemConfig, SettingsOverrides};
use lcvx::bench::{
    compare_zoh, run_benchmark, write_controls_csv, write_trajectory_csv, BenchOptions,
};
use lcvx::search::{write_sweep_csv, write_trace_json};
use lcvx::{
    certify, discretize_zoh, sweep, ternary_search, DiscreteSystem, Solution, SolverSettings,
    TrajectoryProblem,
};

#[derive(Parser)]
#[command(name = "lcvx", about = "Annulus-bounded trajectory optimization by convexification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Problem configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Search interval resolution.
    #[arg(long)]
    eps: Option<f64>,
    /// Eigenvalue perturbation half-width.
    #[arg(long)]
    eps_a: Option<f64>,
    /// Seed for the perturbation sampler.
    #[arg(long)]
    seed: Option<u64>,
    /// Solver feasibility tolerance.
    #[arg(long)]
    tol_feas: Option<f64>,
    /// Absolute certification band tolerance.
    #[arg(long)]
    tol_viol: Option<f64>,
    /// Skip the eigenvalue perturbation.
    #[arg(long)]
    no_perturb: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the hold matrices (first-order and zero-order) for a config.
    Discretize {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Solve the relaxed problem once at a fixed effective bound.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Effective lower bound; defaults to rho_min.
        #[arg(long)]
        rho_eff: Option<f64>,
        /// Use the piecewise-constant discretization instead.
        #[arg(long)]
        zoh: bool,
        /// Dump the assembled program and raw solution as JSON.
        #[arg(long)]
        debug_dump: Option<PathBuf>,
    },
    /// Run the full pipeline: perturb, search the bound, certify.
    Search {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Classify probes over a grid of effective bounds.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Grid as start:end:step (end exclusive).
        #[arg(long)]
        grid: String,
    },
    /// Certify a stored solution against the config's annulus band.
    Certify {
        /// Problem configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Solution JSON produced by `solve` or `search`.
        #[arg(long)]
        solution: PathBuf,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tol_viol: Option<f64>,
    },
    /// Reproduce the double-integrator study and its baseline comparison.
    Bench {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        eps_a: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_perturb: bool,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
    fn io(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
    fn solver(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }
    fn certification(message: impl Into<String>) -> Self {
        Self { code: 5, message: message.into() }
    }
}

type CResult<T> = Result<T, Failure>;

fn main() {
    let cli = Cli::parse();
    if let Err(failure) = run(cli.command) {
        eprintln!("error: {}", failure.message);
        std::process::exit(failure.code);
    }
}

fn run(command: Command) -> CResult<()> {
    match command {
        Command::Discretize { common } => cmd_discretize(&common),
        Command::Solve { common, rho_eff, zoh, debug_dump } => {
            cmd_solve(&common, rho_eff, zoh, debug_dump.as_deref())
        }
        Command::Search { common } => cmd_search(&common),
        Command::Sweep { common, grid } => cmd_sweep(&common, &grid),
        Command::Certify { config, solution, out, tol_viol } => {
            cmd_certify(&config, &solution, out.as_deref(), tol_viol)
        }
        Command::Bench { out, eps, eps_a, seed, no_perturb } => {
            cmd_bench(&out, eps, eps_a, seed, no_perturb)
        }
    }
}

fn load_config(path: &Path, overrides: &SettingsOverrides) -> CResult<ProblemConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::io(format!("reading {}: {e}", path.display())))?;
    let mut cfg = ProblemConfig::parse(&text).map_err(Failure::config)?;
    cfg.apply_overrides(overrides);
    Ok(cfg)
}

fn overrides_of(common: &CommonArgs) -> SettingsOverrides {
    SettingsOverrides {
        eps: common.eps,
        eps_a: common.eps_a,
        seed: common.seed,
        tol_feas: common.tol_feas,
        tol_viol: common.tol_viol,
    }
}

fn ensure_out_dir(path: &Path) -> CResult<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| Failure::io(format!("creating {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::io(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| Failure::io(format!("writing {}: {e}", path.display())))
}

fn timestamp_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

/// Builds the perturbed problem unless disabled; returns the shift used so
/// runs can be reproduced.
fn maybe_perturb(
    problem: &TrajectoryProblem,
    cfg: &ProblemConfig,
    no_perturb: bool,
) -> CResult<(TrajectoryProblem, Vec<f64>, bool)> {
    if no_perturb {
        return Ok((problem.clone(), Vec::new(), false));
    }
    let (perturbed, spec) =
        lcvx::bench::apply_random_perturbation(problem, cfg.settings.eps_a, cfg.settings.seed)
            .map_err(|e| Failure::solver(format!("perturbation failed: {e}")))?;
    Ok((perturbed, spec.q, true))
}

#[derive(Serialize)]
struct DiscretizationFile {
    n_states: usize,
    n_controls: usize,
    dt: f64,
    n_segments: usize,
    t_f: f64,
    a: Vec<Vec<f64>>,
    b0: Vec<Vec<f64>>,
    b1: Vec<Vec<f64>>,
    zoh_a: Vec<Vec<f64>>,
    zoh_b: Vec<Vec<f64>>,
}

fn cmd_discretize(common: &CommonArgs) -> CResult<()> {
    let cfg = load_config(&common.config, &overrides_of(common))?;
    let problem = cfg.to_problem().map_err(Failure::config)?;
    let sys = cfg.continuous_system().map_err(Failure::config)?;
    let (zoh_a, zoh_b) = discretize_zoh(&sys, cfg.grid.t_f, cfg.grid.n_segments)
        .map_err(|e| Failure::config(e.to_string()))?;

    ensure_out_dir(&common.out)?;
    let disc = &problem.disc;
    write_json(
        &common.out.join("discretization.json"),
        &DiscretizationFile {
            n_states: disc.n_states(),
            n_controls: disc.n_controls(),
            dt: disc.dt,
            n_segments: disc.n_segments,
            t_f: disc.t_f,
            a: matrix_rows(&disc.a),
            b0: matrix_rows(&disc.b0),
            b1: matrix_rows(&disc.b1),
            zoh_a: matrix_rows(&zoh_a),
            zoh_b: matrix_rows(&zoh_b),
        },
    )
}

/// Piecewise-constant variant of the configured problem: hold response in
/// the first input matrix, inert trailing control vertex, rectangle
/// quadrature over segments.
fn zoh_problem(cfg: &ProblemConfig) -> CResult<(TrajectoryProblem, usize)> {
    let base = cfg.to_problem().map_err(Failure::config)?;
    let sys = cfg.continuous_system().map_err(Failure::config)?;
    let (a, b) = discretize_zoh(&sys, cfg.grid.t_f, cfg.grid.n_segments)
        .map_err(|e| Failure::config(e.to_string()))?;
    let n_seg = cfg.grid.n_segments;
    let n_u = base.disc.n_controls();
    let dt = base.disc.dt;
    let disc = DiscreteSystem::new(
        a,
        b,
        DMatrix::zeros(base.disc.n_states(), n_u),
        dt,
        n_seg,
        cfg.grid.t_f,
    )
    .map_err(|e| Failure::config(e.to_string()))?;
    let mut weights = vec![dt; n_seg + 1];
    weights[n_seg] = 0.0;
    let mut cost = base.cost.clone();
    cost.quadrature_weights = weights;
    Ok((TrajectoryProblem { disc, cost, ..base }, n_seg))
}

#[derive(Serialize)]
struct DebugDump<'a> {
    program: &'a lcvx::program::ConicProgram,
    solution: &'a Solution,
}

fn cmd_solve(
    common: &CommonArgs,
    rho_eff: Option<f64>,
    zoh: bool,
    debug_dump: Option<&Path>,
) -> CResult<()> {
    let cfg = load_config(&common.config, &overrides_of(common))?;
    let settings = cfg.solver_settings();

    // A single solve inspects the problem as configured; the eigenvalue
    // perturbation belongs to the search pipeline.
    let (mut problem, control_count) = if zoh {
        zoh_problem(&cfg)?
    } else {
        let p = cfg.to_problem().map_err(Failure::config)?;
        let n = p.disc.n_vertices();
        (p, n)
    };
    if let Some(rho) = rho_eff {
        problem = problem.with_rho_eff(rho);
        problem.validate().map_err(|e| Failure::config(e.to_string()))?;
    }

    let program = lcvx::build_program(&problem).map_err(|e| Failure::config(e.to_string()))?;
    let solution = lcvx::solve(&program, &settings).map_err(|e| Failure::solver(e.to_string()))?;
    if let Some(path) = debug_dump {
        write_json(path, &DebugDump { program: &program, solution: &solution })?;
    }
    solution
        .require_optimal()
        .map_err(|_| Failure::solver(format!("solve ended with status {:?}", solution.status)))?;

    ensure_out_dir(&common.out)?;
    write_json(&common.out.join("solution.json"), &solution)?;
    write_trajectory_csv(common.out.join("trajectory.csv"), problem.disc.dt, &solution.x)
        .map_err(|e| Failure::io(e.to_string()))?;
    write_controls_csv(
        common.out.join("controls.csv"),
        problem.disc.dt,
        &solution.u[..control_count],
    )
    .map_err(|e| Failure::io(e.to_string()))?;
    Ok(())
}

#[derive(Serialize)]
struct SearchReport {
    timestamp_unix: u64,
    seed: u64,
    eps: f64,
    eps_a: f64,
    perturbation_applied: bool,
    q: Vec<f64>,
    converged_rho: f64,
    cost: f64,
    solver_calls: usize,
    bracket_estimates: (f64, f64),
    certification_tolerance: f64,
    vertex_violations: usize,
    edge_violations: usize,
    eta_n_zero: bool,
    structural_bounds_ok: bool,
}

fn cmd_search(common: &CommonArgs) -> CResult<()> {
    let cfg = load_config(&common.config, &overrides_of(common))?;
    let settings = cfg.solver_settings();
    let base = cfg.to_problem().map_err(Failure::config)?;
    let (problem, q, perturbed) = maybe_perturb(&base, &cfg, common.no_perturb)?;

    ensure_out_dir(&common.out)?;
    let (solution, trace) = match ternary_search(&problem, cfg.settings.eps, &settings) {
        Ok(v) => v,
        Err(lcvx::Error::SearchFailed { message, trace }) => {
            write_trace_json(&trace, common.out.join("trace.json"))
                .map_err(|e| Failure::io(e.to_string()))?;
            return Err(Failure::solver(format!("search failed: {message}")));
        }
        Err(lcvx::Error::Validation(msg)) => return Err(Failure::config(msg)),
        Err(e) => return Err(Failure::solver(e.to_string())),
    };
    write_trace_json(&trace, common.out.join("trace.json"))
        .map_err(|e| Failure::io(e.to_string()))?;

    let tol = cfg.settings.tol_viol.unwrap_or(1e-4 * problem.rho_max);
    let report = certify(&solution, problem.rho_min, problem.rho_max, tol)
        .map_err(|e| Failure::solver(e.to_string()))?;

    write_trajectory_csv(common.out.join("trajectory.csv"), problem.disc.dt, &solution.x)
        .map_err(|e| Failure::io(e.to_string()))?;
    write_controls_csv(common.out.join("controls.csv"), problem.disc.dt, &solution.u)
        .map_err(|e| Failure::io(e.to_string()))?;
    write_json(&common.out.join("solution.json"), &solution)?;

    let n_x = problem.disc.n_states();
    let bounds_ok =
        report.n_vertex_violations() <= n_x + 1 && report.n_edge_violations() <= 2 * n_x + 2;
    write_json(
        &common.out.join("report.json"),
        &SearchReport {
            timestamp_unix: timestamp_unix(),
            seed: cfg.settings.seed,
            eps: cfg.settings.eps,
            eps_a: cfg.settings.eps_a,
            perturbation_applied: perturbed,
            q,
            converged_rho: trace.final_rho,
            cost: solution.cost,
            solver_calls: trace.solver_calls,
            bracket_estimates: trace.bracket_estimates,
            certification_tolerance: tol,
            vertex_violations: report.n_vertex_violations(),
            edge_violations: report.n_edge_violations(),
            eta_n_zero: report.eta_n_zero,
            structural_bounds_ok: bounds_ok,
        },
    )?;

    if !bounds_ok {
        return Err(Failure::certification(format!(
            "certification bounds exceeded: {} vertex, {} edge violations",
            report.n_vertex_violations(),
            report.n_edge_violations()
        )));
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("grid must be start:end:step, got {spec:?}"));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|e| format!("grid component {p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if !step.is_finite() || step <= 0.0 {
        return Err("grid step must be positive".to_string());
    }
    if end < start {
        return Err("grid end must be at least its start".to_string());
    }
    let mut values = Vec::new();
    let mut k = 0usize;
    loop {
        let v = start + step * k as f64;
        if v >= end - 1e-12 {
            break;
        }
        values.push(v);
        k += 1;
    }
    Ok(values)
}

#[derive(Serialize)]
struct SweepRow {
    rho_eff: f64,
    classification: String,
    cost: Option<f64>,
    lower_vertex_violations: Option<usize>,
    edge_violations: Option<usize>,
    failure: Option<String>,
}

fn cmd_sweep(common: &CommonArgs, grid_spec: &str) -> CResult<()> {
    let cfg = load_config(&common.config, &overrides_of(common))?;
    let settings = cfg.solver_settings();
    let base = cfg.to_problem().map_err(Failure::config)?;
    let (problem, _, _) = maybe_perturb(&base, &cfg, common.no_perturb)?;

    let grid = parse_grid(grid_spec).map_err(Failure::config)?;
    let points = sweep(&problem, &grid, &settings).map_err(|e| match e {
        lcvx::Error::Validation(msg) => Failure::config(msg),
        other => Failure::solver(other.to_string()),
    })?;

    ensure_out_dir(&common.out)?;
    write_sweep_csv(&points, common.out.join("sweep.csv"))
        .map_err(|e| Failure::io(e.to_string()))?;

    let rows: Vec<SweepRow> = points
        .iter()
        .map(|p| match &p.probe {
            Ok(outcome) => SweepRow {
                rho_eff: p.rho_eff,
                classification: outcome.classification.as_str().to_string(),
                cost: Some(outcome.cost),
                lower_vertex_violations: Some(outcome.report.lower_vertex_violations()),
                edge_violations: Some(outcome.report.n_edge_violations()),
                failure: None,
            },
            Err(message) => SweepRow {
                rho_eff: p.rho_eff,
                classification: "failed".to_string(),
                cost: None,
                lower_vertex_violations: None,
                edge_violations: None,
                failure: Some(message.clone()),
            },
        })
        .collect();
    write_json(&common.out.join("sweep.json"), &rows)
}

fn cmd_certify(
    config: &Path,
    solution_path: &Path,
    out: Option<&Path>,
    tol_viol: Option<f64>,
) -> CResult<()> {
    let cfg = load_config(config, &SettingsOverrides { tol_viol, ..Default::default() })?;
    let problem = cfg.to_problem().map_err(Failure::config)?;
    let text = std::fs::read_to_string(solution_path)
        .map_err(|e| Failure::io(format!("reading {}: {e}", solution_path.display())))?;
    let solution: Solution =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("solution file: {e}")))?;

    let tol = cfg.settings.tol_viol.unwrap_or(1e-4 * problem.rho_max);
    let report = certify(&solution, problem.rho_min, problem.rho_max, tol)
        .map_err(|e| Failure::config(e.to_string()))?;

    match out {
        Some(path) => write_json(path, &report)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| Failure::io(e.to_string()))?
        ),
    }

    let n_x = problem.disc.n_states();
    if report.n_vertex_violations() > n_x + 1 || report.n_edge_violations() > 2 * n_x + 2 {
        return Err(Failure::certification(format!(
            "structural bounds exceeded: {} vertex, {} edge violations",
            report.n_vertex_violations(),
            report.n_edge_violations()
        )));
    }
    Ok(())
}

fn cmd_bench(
    out: &Path,
    eps: Option<f64>,
    eps_a: Option<f64>,
    seed: Option<u64>,
    no_perturb: bool,
) -> CResult<()> {
    ensure_out_dir(out)?;
    let options = BenchOptions {
        seed: seed.unwrap_or(0),
        eps_a: eps_a.unwrap_or(1e-6),
        eps: eps.unwrap_or(1e-3),
        apply_perturbation: !no_perturb,
        settings: SolverSettings::default(),
    };
    let report = run_benchmark(out, &options).map_err(|e| Failure::solver(e.to_string()))?;
    let comparison =
        compare_zoh(out, &options.settings).map_err(|e| Failure::solver(e.to_string()))?;
    write_json(&out.join("zoh_compare.json"), &comparison)?;

    for target in &report.targets {
        println!(
            "target {:32} [{}] actual {:.6} expected {:.6} tol {:.6}",
            target.name,
            if target.pass { "PASS" } else { "FAIL" },
            target.actual,
            target.expected,
            target.tolerance
        );
    }
    if !report.all_pass {
        return Err(Failure::certification("benchmark targets failed".to_string()));
    }
    Ok(())
}
