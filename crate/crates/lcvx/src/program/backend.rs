//! Conic solver contract and the default Clarabel backend.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::conic::{ConeBlock, ConicProgram};
use super::{SolveStatus, SolverSettings};
use crate::error::{Error, Result};

/// Untyped output of a conic backend: primal and dual vectors in the row
/// and column order of the assembled program.
#[derive(Debug, Clone)]
pub struct RawConicSolution {
    pub status: SolveStatus,
    pub raw_status: String,
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub obj_val: f64,
    pub obj_val_dual: f64,
    pub iterations: u32,
}

/// Contract for a conic backend: return the primal minimizer and the
/// equality-row multipliers of the program at the requested tolerances.
pub trait ConicSolver {
    fn solve_conic(
        &self,
        program: &ConicProgram,
        settings: &SolverSettings,
    ) -> Result<RawConicSolution>;
}

/// Column-compressed form of the triplet matrix, duplicates summed.
fn to_csc(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
    sorted.sort_by_key(|&(r, c, _)| (c, r));

    // colptr[c+1] counts entries per column until the prefix sum below.
    let mut colptr = vec![0usize; n_cols + 1];
    let mut rowval: Vec<usize> = Vec::with_capacity(sorted.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(sorted.len());
    let mut last: Option<(usize, usize)> = None;
    for &(r, c, v) in &sorted {
        if last == Some((c, r)) {
            *nzval.last_mut().unwrap() += v;
            continue;
        }
        colptr[c + 1] += 1;
        rowval.push(r);
        nzval.push(v);
        last = Some((c, r));
    }
    for c in 0..n_cols {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(n_rows, n_cols, colptr, rowval, nzval)
}

fn diag_csc(diag: &[f64]) -> CscMatrix<f64> {
    let n = diag.len();
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for (i, &v) in diag.iter().enumerate() {
        if v != 0.0 {
            rowval.push(i);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(n, n, colptr, rowval, nzval)
}

/// Default backend: the Clarabel interior-point solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

impl ConicSolver for ClarabelBackend {
    fn solve_conic(
        &self,
        program: &ConicProgram,
        settings: &SolverSettings,
    ) -> Result<RawConicSolution> {
        let n_vars = program.n_vars();
        let n_rows = program.n_rows();
        let p = diag_csc(&program.p_diag);
        let a = to_csc(n_rows, n_vars, &program.a_triplets);

        let cones: Vec<SupportedConeT<f64>> = program
            .cones
            .iter()
            .map(|c| match c {
                ConeBlock::Zero(d) => SupportedConeT::ZeroConeT(*d),
                ConeBlock::NonNegative(d) => SupportedConeT::NonnegativeConeT(*d),
                ConeBlock::SecondOrder(d) => SupportedConeT::SecondOrderConeT(*d),
            })
            .collect();

        let clarabel_settings = DefaultSettings::<f64> {
            verbose: settings.verbose,
            max_iter: settings.max_iter,
            tol_gap_abs: settings.gap_tol,
            tol_gap_rel: settings.gap_tol,
            tol_feas: settings.feas_tol,
            ..DefaultSettings::default()
        };

        let mut solver =
            DefaultSolver::new(&p, &program.q, &a, &program.b, &cones, clarabel_settings)
                .map_err(|e| Error::SolverSetup(e.to_string()))?;
        solver.solve();

        let solution = &solver.solution;
        let status = match solution.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible
            | SolverStatus::DualInfeasible
            | SolverStatus::AlmostPrimalInfeasible
            | SolverStatus::AlmostDualInfeasible => SolveStatus::Infeasible,
            _ => SolveStatus::NumericalFailure,
        };

        Ok(RawConicSolution {
            status,
            raw_status: format!("{:?}", solution.status),
            primal: solution.x.clone(),
            dual: solution.z.clone(),
            obj_val: solution.obj_val,
            obj_val_dual: solution.obj_val_dual,
            iterations: solution.iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csc_assembly_sums_duplicates() {
        let m = to_csc(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 4.0), (0, 1, -1.0)]);
        assert_eq!(m.colptr, vec![0, 1, 3]);
        assert_eq!(m.rowval, vec![0, 0, 1]);
        assert_eq!(m.nzval, vec![3.0, -1.0, 4.0]);
    }

    #[test]
    fn diag_skips_zeros() {
        let m = diag_csc(&[1.0, 0.0, 2.0]);
        assert_eq!(m.colptr, vec![0, 1, 1, 2]);
        assert_eq!(m.rowval, vec![0, 2]);
        assert_eq!(m.nzval, vec![1.0, 2.0]);
    }
}
