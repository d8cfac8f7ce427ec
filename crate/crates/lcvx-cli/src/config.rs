//! JSON problem configuration: the continuous system, grid, bounds, cost,
//! boundary conditions, and solver settings, with flag overrides layered
//! on top (flag > file > default).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use lcvx::{
    integrate_stm, ContinuousSystem, CostSpec, RunningCost, SolverSettings, TrajectoryProblem,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub a_c: Vec<Vec<f64>>,
    pub b_c: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_f: f64,
    pub n_segments: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_substeps() -> usize {
    lcvx::discretization::DEFAULT_SUBSTEPS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub rho_min: f64,
    pub rho_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub terminal_weight: f64,
    pub terminal_target: Vec<f64>,
    pub running: RunningCost,
    /// One weight per vertex; omit for trapezoid weights.
    #[serde(default)]
    pub quadrature_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub x_init: Vec<f64>,
    #[serde(default)]
    pub terminal_matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub terminal_offset: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsConfig {
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_eps_a")]
    pub eps_a: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol_feas: f64,
    #[serde(default = "default_tol")]
    pub tol_gap: f64,
    #[serde(default)]
    pub tol_viol: Option<f64>,
    #[serde(default = "default_eta_threshold")]
    pub eta_threshold: f64,
}

fn default_eps() -> f64 {
    1e-3
}
fn default_eps_a() -> f64 {
    1e-6
}
fn default_tol() -> f64 {
    1e-8
}
fn default_eta_threshold() -> f64 {
    1e-5
}

impl Default for SettingsConfig {
    fn default() -> Self {
        Self {
            eps: default_eps(),
            eps_a: default_eps_a(),
            seed: 0,
            tol_feas: default_tol(),
            tol_gap: default_tol(),
            tol_viol: None,
            eta_threshold: default_eta_threshold(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub system: SystemConfig,
    pub grid: GridConfig,
    pub bounds: BoundsConfig,
    pub cost: CostConfig,
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub settings: SettingsConfig,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, String> {
    if rows.is_empty() {
        return Err(format!("{what}: matrix has no rows"));
    }
    let n_cols = rows[0].len();
    if n_cols == 0 {
        return Err(format!("{what}: matrix has empty rows"));
    }
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(format!("{what}: rows have inconsistent lengths"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), n_cols, &flat))
}

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config schema: {e}"))
    }

    pub fn continuous_system(&self) -> Result<ContinuousSystem, String> {
        let a_c = rows_to_matrix(&self.system.a_c, "system.a_c")?;
        let b_c = rows_to_matrix(&self.system.b_c, "system.b_c")?;
        ContinuousSystem::new(a_c, b_c).map_err(|e| e.to_string())
    }

    /// Builds the trajectory problem at `rho_eff = rho_min` with no rate
    /// bound; pipeline stages adjust both.
    pub fn to_problem(&self) -> Result<TrajectoryProblem, String> {
        let sys = self.continuous_system()?;
        let disc = integrate_stm(&sys, self.grid.t_f, self.grid.n_segments, self.grid.substeps)
            .map_err(|e| e.to_string())?;
        let n_x = disc.n_states();
        let dt = disc.dt;

        let cost = match &self.cost.quadrature_weights {
            Some(weights) => CostSpec {
                terminal_weight: self.cost.terminal_weight,
                terminal_target: DVector::from_vec(self.cost.terminal_target.clone()),
                running_kind: self.cost.running,
                quadrature_weights: weights.clone(),
            },
            None => CostSpec::trapezoid(
                self.cost.terminal_weight,
                DVector::from_vec(self.cost.terminal_target.clone()),
                self.cost.running,
                self.grid.n_segments,
                dt,
            ),
        };

        let terminal_matrix = if self.boundary.terminal_matrix.is_empty() {
            DMatrix::zeros(0, n_x)
        } else {
            rows_to_matrix(&self.boundary.terminal_matrix, "boundary.terminal_matrix")?
        };

        let problem = TrajectoryProblem {
            disc,
            cost,
            rho_min: self.bounds.rho_min,
            rho_eff: self.bounds.rho_min,
            rho_max: self.bounds.rho_max,
            rate_bound: None,
            x_init: DVector::from_vec(self.boundary.x_init.clone()),
            terminal_matrix,
            terminal_offset: DVector::from_vec(self.boundary.terminal_offset.clone()),
        };
        problem.validate().map_err(|e| e.to_string())?;
        Ok(problem)
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            feas_tol: self.settings.tol_feas,
            gap_tol: self.settings.tol_gap,
            eta_threshold: self.settings.eta_threshold,
            violation_tol: self.settings.tol_viol,
            ..SolverSettings::default()
        }
    }

    /// Applies command-line overrides on top of the file values.
    pub fn apply_overrides(&mut self, overrides: &SettingsOverrides) {
        if let Some(v) = overrides.eps {
            self.settings.eps = v;
        }
        if let Some(v) = overrides.eps_a {
            self.settings.eps_a = v;
        }
        if let Some(v) = overrides.seed {
            self.settings.seed = v;
        }
        if let Some(v) = overrides.tol_feas {
            self.settings.tol_feas = v;
        }
        if let Some(v) = overrides.tol_viol {
            self.settings.tol_viol = Some(v);
        }
    }
}

/// Settings given as flags; `None` keeps the file value.
#[derive(Debug, Clone, Default)]
pub struct SettingsOverrides {
    pub eps: Option<f64>,
    pub eps_a: Option<f64>,
    pub seed: Option<u64>,
    pub tol_feas: Option<f64>,
    pub tol_viol: Option<f64>,
}
