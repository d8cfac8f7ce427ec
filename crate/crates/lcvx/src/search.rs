//! Classification of solved probes and the ternary search over the
//! effective control-norm lower bound.
//!
//! Raising the effective bound tightens the slack box but loosens the
//! admissible control rate; the optimal cost over this trade-off is
//! unimodal, and probes outside the certified band are detected from their
//! solutions (too many lower-bound vertex violations on the low side, a
//! vanishing terminal multiplier on the high side). The search walks
//! interior third-points, overriding the cost comparison whenever a probe
//! classifies as out of band.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certify::{certify, delta_bound, eta_n_zero, with_vertex_conditions, CertificationReport};
use crate::error::{Error, Result};
use crate::program::{solve_problem, Solution, SolverSettings, TrajectoryProblem};

/// Probe regimes, with the plot color conventionally used for each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeClassification {
    /// Lower-bound vertex violations exceed `n_x + 1` while the terminal
    /// multiplier is nonzero: the effective bound sits below the certified
    /// band. Plotted red.
    TooLow,
    /// The terminal multiplier vanished: the effective bound sits at or
    /// above the top of the certified band. Plotted orange.
    EtaZero,
    /// Neither marker fired. Plotted blue.
    Feasible,
}

impl ProbeClassification {
    pub fn color(&self) -> &'static str {
        match self {
            ProbeClassification::TooLow => "red",
            ProbeClassification::EtaZero => "orange",
            ProbeClassification::Feasible => "blue",
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ProbeClassification::TooLow => "too_low",
            ProbeClassification::EtaZero => "eta_zero",
            ProbeClassification::Feasible => "feasible",
        }
    }
}

/// A solved and classified probe at one effective lower bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub rho_eff: f64,
    pub classification: ProbeClassification,
    pub cost: f64,
    pub solution: Solution,
    pub report: CertificationReport,
}

/// One ternary-search iteration: the bracket, the two probe points, and
/// what came back.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchIteration {
    pub rho_low: f64,
    pub rho_high: f64,
    pub rho_1: f64,
    pub rho_2: f64,
    pub classification_1: ProbeClassification,
    pub classification_2: ProbeClassification,
    pub cost_1: f64,
    pub cost_2: f64,
}

/// Full record of a search run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchTrace {
    pub iterations: Vec<SearchIteration>,
    pub solver_calls: usize,
    pub final_rho: f64,
    /// `(rho_min_minus, rho_min_plus)` estimated from observed probe
    /// classifications; falls back to the search bounds where a side was
    /// never observed.
    pub bracket_estimates: (f64, f64),
}

fn violation_tol(problem: &TrajectoryProblem, settings: &SolverSettings) -> f64 {
    settings.violation_tol.unwrap_or(1e-4 * problem.rho_max)
}

/// Classifies an optimal probe solution.
///
/// `too_low` requires a nonzero terminal multiplier together with more
/// than `n_x + 1` vertices whose control norm falls below the original
/// lower bound; `eta_zero` fires on a vanishing terminal multiplier alone.
pub fn classify_probe(
    problem: &TrajectoryProblem,
    solution: Solution,
    settings: &SolverSettings,
) -> Result<ProbeOutcome> {
    solution.require_optimal()?;
    let tol = violation_tol(problem, settings);
    let report = certify(&solution, problem.rho_min, problem.rho_max, tol)?;
    let mut report = with_vertex_conditions(report, &solution, &problem.disc, settings.eta_threshold)?;
    let eta_zero = eta_n_zero(&solution, settings.eta_threshold);
    report.eta_n_zero = eta_zero;

    let n_x = problem.disc.n_states();
    let classification = if eta_zero {
        ProbeClassification::EtaZero
    } else if report.lower_vertex_violations() > n_x + 1 {
        ProbeClassification::TooLow
    } else {
        ProbeClassification::Feasible
    };

    Ok(ProbeOutcome {
        rho_eff: problem.rho_eff,
        classification,
        cost: solution.cost,
        solution,
        report,
    })
}

/// Solves and classifies one probe at `rho_eff`, with the rate bound set
/// from the bound formula. Retries once at relaxed tolerances on a
/// numerical failure. Returns the outcome and the number of solver calls.
fn run_probe(
    base: &TrajectoryProblem,
    rho_eff: f64,
    settings: &SolverSettings,
) -> Result<(ProbeOutcome, usize)> {
    let delta = delta_bound(rho_eff, base.rho_min)?;
    let problem = base.with_rho_eff(rho_eff).with_rate_bound(Some(delta));

    let solution = solve_problem(&problem, settings)?;
    match solution.status {
        crate::program::SolveStatus::Optimal => {
            Ok((classify_probe(&problem, solution, settings)?, 1))
        }
        crate::program::SolveStatus::Infeasible => {
            Err(Error::SolveFailed { status: solution.status })
        }
        crate::program::SolveStatus::NumericalFailure => {
            let retried = solve_problem(&problem, &settings.relaxed())?;
            if retried.is_optimal() {
                return Ok((classify_probe(&problem, retried, settings)?, 2));
            }
            Err(Error::SolveFailed { status: retried.status })
        }
    }
}

/// Solves and classifies a single probe at `rho_eff`, with the rate bound
/// taken from the bound formula.
pub fn probe_at(
    base: &TrajectoryProblem,
    rho_eff: f64,
    settings: &SolverSettings,
) -> Result<ProbeOutcome> {
    run_probe(base, rho_eff, settings).map(|(outcome, _)| outcome)
}

/// Tracks the empirical band edges from observed classifications.
#[derive(Default)]
struct BracketObserver {
    max_too_low: Option<f64>,
    min_eta_zero: Option<f64>,
}

impl BracketObserver {
    fn observe(&mut self, outcome: &ProbeOutcome) {
        match outcome.classification {
            ProbeClassification::TooLow => {
                self.max_too_low = Some(self.max_too_low.map_or(outcome.rho_eff, |v| v.max(outcome.rho_eff)));
            }
            ProbeClassification::EtaZero => {
                self.min_eta_zero = Some(self.min_eta_zero.map_or(outcome.rho_eff, |v| v.min(outcome.rho_eff)));
            }
            ProbeClassification::Feasible => {}
        }
    }

    fn estimates(&self, rho_min: f64, rho_max: f64) -> (f64, f64) {
        (
            self.max_too_low.unwrap_or(rho_min),
            self.min_eta_zero.unwrap_or(rho_max),
        )
    }
}

/// Ternary search for the cost-minimizing effective lower bound.
///
/// Probes the two interior third-points each iteration; a `too_low` first
/// probe raises the bracket floor, an `eta_zero` second probe lowers the
/// ceiling, otherwise the usual cost comparison shrinks the bracket. Ends
/// with a solve at the bracket midpoint, which is certified and returned
/// regardless of its classification.
pub fn ternary_search(
    base: &TrajectoryProblem,
    eps: f64,
    settings: &SolverSettings,
) -> Result<(Solution, SearchTrace)> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::validation("eps must be positive and finite"));
    }
    base.validate()?;

    let mut rho_low = base.rho_min;
    let mut rho_high = base.rho_max;
    let mut iterations = Vec::new();
    let mut solver_calls = 0usize;
    let mut brackets = BracketObserver::default();

    let fail = |message: String,
                iterations: Vec<SearchIteration>,
                solver_calls: usize,
                brackets: &BracketObserver| {
        Error::SearchFailed {
            message,
            trace: Box::new(SearchTrace {
                iterations,
                solver_calls,
                final_rho: f64::NAN,
                bracket_estimates: brackets.estimates(base.rho_min, base.rho_max),
            }),
        }
    };

    while rho_high - rho_low > eps {
        let width = rho_high - rho_low;
        let rho_1 = rho_low + width / 3.0;
        let rho_2 = rho_high - width / 3.0;

        // The two probes are independent solves; run them side by side.
        let (res_1, res_2) = std::thread::scope(|scope| {
            let h1 = scope.spawn(|| run_probe(base, rho_1, settings));
            let h2 = scope.spawn(|| run_probe(base, rho_2, settings));
            (h1.join().expect("probe thread"), h2.join().expect("probe thread"))
        });

        let (probe_1, calls_1) = match res_1 {
            Ok(v) => v,
            Err(e) => {
                solver_calls += 2;
                return Err(fail(
                    format!("probe at rho_eff = {rho_1} unusable: {e}"),
                    iterations,
                    solver_calls,
                    &brackets,
                ));
            }
        };
        let (probe_2, calls_2) = match res_2 {
            Ok(v) => v,
            Err(e) => {
                solver_calls += calls_1 + 2;
                return Err(fail(
                    format!("probe at rho_eff = {rho_2} unusable: {e}"),
                    iterations,
                    solver_calls,
                    &brackets,
                ));
            }
        };
        solver_calls += calls_1 + calls_2;
        brackets.observe(&probe_1);
        brackets.observe(&probe_2);

        iterations.push(SearchIteration {
            rho_low,
            rho_high,
            rho_1,
            rho_2,
            classification_1: probe_1.classification,
            classification_2: probe_2.classification,
            cost_1: probe_1.cost,
            cost_2: probe_2.cost,
        });

        if probe_1.classification == ProbeClassification::TooLow {
            rho_low = rho_1;
        } else if probe_2.classification == ProbeClassification::EtaZero {
            rho_high = rho_2;
        } else if probe_1.cost > probe_2.cost {
            rho_low = rho_1;
        } else {
            rho_high = rho_2;
        }
    }

    let final_rho = (rho_low + rho_high) / 2.0;
    let (final_probe, calls) = match run_probe(base, final_rho, settings) {
        Ok(v) => v,
        Err(e) => {
            solver_calls += 2;
            return Err(fail(
                format!("final solve at rho_eff = {final_rho} unusable: {e}"),
                iterations,
                solver_calls,
                &brackets,
            ));
        }
    };
    solver_calls += calls;
    brackets.observe(&final_probe);

    let trace = SearchTrace {
        iterations,
        solver_calls,
        final_rho,
        bracket_estimates: brackets.estimates(base.rho_min, base.rho_max),
    };
    Ok((final_probe.solution, trace))
}

/// A grid point of a sweep: the probe, or the reason it was unusable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rho_eff: f64,
    pub probe: std::result::Result<ProbeOutcome, String>,
}

/// Classifies a probe at every grid value. Individual failures are
/// recorded in place and the sweep continues.
pub fn sweep(
    base: &TrajectoryProblem,
    grid: &[f64],
    settings: &SolverSettings,
) -> Result<Vec<SweepPoint>> {
    base.validate()?;
    for &rho in grid {
        if !rho.is_finite() || rho < base.rho_min || rho >= base.rho_max {
            return Err(Error::validation(format!(
                "grid value {} outside [{}, {})",
                rho, base.rho_min, base.rho_max
            )));
        }
    }

    let n_workers = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
        .min(grid.len().max(1));
    let mut points: Vec<Option<SweepPoint>> = Vec::new();
    points.resize_with(grid.len(), || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(&mut points);

    std::thread::scope(|scope| {
        for _ in 0..n_workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= grid.len() {
                    break;
                }
                let rho = grid[i];
                let probe = run_probe(base, rho, settings)
                    .map(|(outcome, _)| outcome)
                    .map_err(|e| e.to_string());
                let point = SweepPoint { rho_eff: rho, probe };
                results.lock().unwrap()[i] = Some(point);
            });
        }
    });

    Ok(points.into_iter().map(|p| p.expect("all points filled")).collect())
}

/// Writes sweep results as `rho_eff, classification, cost` rows.
pub fn write_sweep_csv<P: AsRef<Path>>(points: &[SweepPoint], path: P) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["rho_eff", "classification", "cost"])?;
    for point in points {
        match &point.probe {
            Ok(outcome) => writer.write_record([
                format!("{}", point.rho_eff),
                outcome.classification.as_str().to_string(),
                format!("{}", outcome.cost),
            ])?,
            Err(_) => writer.write_record([
                format!("{}", point.rho_eff),
                "failed".to_string(),
                String::new(),
            ])?,
        }
    }
    writer.flush()?;
    Ok(())
}

/// Writes a search trace as pretty JSON.
pub fn write_trace_json<P: AsRef<Path>>(trace: &SearchTrace, path: P) -> Result<()> {
    let mut file = std::fs::File::create(path.as_ref())?;
    file.write_all(serde_json::to_string_pretty(trace)?.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_colors_follow_convention() {
        assert_eq!(ProbeClassification::TooLow.color(), "red");
        assert_eq!(ProbeClassification::EtaZero.color(), "orange");
        assert_eq!(ProbeClassification::Feasible.color(), "blue");
    }

    #[test]
    fn empty_sweep_is_empty() {
        let problem = crate::bench::double_integrator_problem();
        let points = sweep(&problem, &[], &SolverSettings::default()).unwrap();
        assert!(points.is_empty());
    }

    #[test]
    fn sweep_rejects_out_of_band_grid() {
        let problem = crate::bench::double_integrator_problem();
        let err = sweep(&problem, &[3.9], &SolverSettings::default());
        assert!(matches!(err, Err(Error::Validation(_))));
        let err = sweep(&problem, &[6.0], &SolverSettings::default());
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn degenerate_bracket_solves_midpoint_once() {
        let problem = crate::bench::double_integrator_problem();
        let (solution, trace) = ternary_search(&problem, 10.0, &SolverSettings::default()).unwrap();
        assert!(solution.is_optimal());
        assert!(trace.iterations.is_empty());
        assert_eq!(trace.solver_calls, 1);
        assert_eq!(trace.final_rho, 5.0);
    }

    #[test]
    fn bracket_width_shrinks_by_two_thirds() {
        let problem = crate::bench::double_integrator_problem();
        let (_, trace) = ternary_search(&problem, 0.5, &SolverSettings::default()).unwrap();
        let total = problem.rho_max - problem.rho_min;
        for (k, it) in trace.iterations.iter().enumerate() {
            let width = it.rho_high - it.rho_low;
            let expected = total * (2.0f64 / 3.0).powi(k as i32);
            assert!((width - expected).abs() < 1e-9 * total);
        }
    }
}
