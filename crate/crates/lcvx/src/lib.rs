//! Lossless convexification of annulus-bounded optimal control with
//! piecewise linear controls.
//!
//! The pipeline: discretize a continuous LTI system exactly under a
//! first-order hold ([`discretization`]), optionally nudge the dynamics
//! eigenvalues into general position ([`spectra`]), pose the relaxed
//! trajectory problem as a second-order-cone program with control rate
//! constraints and solve it with dual extraction ([`program`]), certify
//! the nonconvex annulus bounds at grid vertices and along interpolated
//! edges ([`certify`]), and ternary-search the effective lower bound for
//! the cost-optimal certified solution ([`search`]). The [`bench`] module
//! reproduces a double-integrator study end to end.

pub mod bench;
pub mod certify;
pub mod discretization;
pub mod error;
pub mod program;
pub mod search;
pub mod spectra;

pub use error::{Error, Result};

pub use certify::{certify, delta_bound, edge_max_norm, edge_min_norm, CertificationReport};
pub use discretization::{
    check_controllability, discretize_zoh, integrate_stm, rollout, ContinuousSystem,
    DiscreteSystem,
};
pub use program::{
    assumption_diagnostics, build_program, solve, solve_problem, CostSpec, RunningCost, Solution,
    SolveStatus, SolverSettings, TrajectoryProblem,
};
pub use search::{
    classify_probe, probe_at, sweep, ternary_search, ProbeClassification, ProbeOutcome,
    SearchTrace,
};
pub use spectra::{eigen_structure, perturb, sample_q, EigenStructure, PerturbationSpec};
