//! Checks that a solved trajectory actually satisfies the nonconvex
//! annulus bounds, at the grid vertices and along the interpolated edges,
//! plus the dual-based sufficient conditions for vertex satisfaction.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::discretization::DiscreteSystem;
use crate::error::{Error, Result};
use crate::program::Solution;

/// Side of the annulus band a violation falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Below,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexViolation {
    pub index: usize,
    pub norm: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeViolation {
    /// Vertex pair `(i, i+1)` bounding the edge.
    pub edge: (usize, usize),
    pub min_norm: f64,
    pub max_norm: f64,
    pub kind: ViolationKind,
}

/// Outcome of certifying one solution against the annulus band
/// `[rho_min, rho_max]` at tolerance `tolerance`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificationReport {
    pub vertex_violations: Vec<VertexViolation>,
    pub edge_violations: Vec<EdgeViolation>,
    pub eta_n_norm: f64,
    pub eta_n_zero: bool,
    /// Vertices where the dual-based sufficient condition fails. Failures
    /// are informative, not errors: the condition implies satisfaction,
    /// not the converse.
    pub vertex_condition_failures: Vec<usize>,
    pub tolerance: f64,
    /// Per-edge minimum interpolated norm, for magnitude plots.
    pub edge_min_norms: Vec<f64>,
    pub edge_max_norms: Vec<f64>,
}

impl CertificationReport {
    pub fn lower_vertex_violations(&self) -> usize {
        self.vertex_violations
            .iter()
            .filter(|v| v.kind == ViolationKind::Below)
            .count()
    }

    pub fn n_vertex_violations(&self) -> usize {
        self.vertex_violations.len()
    }

    pub fn n_edge_violations(&self) -> usize {
        self.edge_violations.len()
    }
}

/// Largest control step that keeps every edge of a trajectory inside the
/// band when both endpoints have norms in `[rho_eff, rho_max]`:
/// `2 * sqrt(rho_eff^2 - rho_min^2)`.
pub fn delta_bound(rho_eff: f64, rho_min: f64) -> Result<f64> {
    if !rho_eff.is_finite() || !rho_min.is_finite() {
        return Err(Error::Domain("rho values must be finite".to_string()));
    }
    if rho_eff < rho_min {
        return Err(Error::Domain(format!(
            "rho_eff = {rho_eff} is below rho_min = {rho_min}"
        )));
    }
    Ok(2.0 * (rho_eff * rho_eff - rho_min * rho_min).sqrt())
}

/// Minimum norm of the linear interpolation between `u_a` and `u_b`.
///
/// The interpolant traces a segment; its closest approach to the origin is
/// either the perpendicular foot (when it falls inside the segment) or an
/// endpoint.
pub fn edge_min_norm(u_a: &DVector<f64>, u_b: &DVector<f64>) -> f64 {
    assert_eq!(u_a.len(), u_b.len(), "edge endpoints must share a dimension");
    let g = u_b - u_a;
    let g_sq = g.norm_squared();
    if g_sq == 0.0 {
        return u_a.norm();
    }
    let t_star = -u_a.dot(&g) / g_sq;
    if (0.0..=1.0).contains(&t_star) {
        (u_a + g * t_star).norm()
    } else {
        u_a.norm().min(u_b.norm())
    }
}

/// Maximum norm of the linear interpolation between `u_a` and `u_b`; the
/// norm is convex along the segment, so it peaks at an endpoint.
pub fn edge_max_norm(u_a: &DVector<f64>, u_b: &DVector<f64>) -> f64 {
    assert_eq!(u_a.len(), u_b.len(), "edge endpoints must share a dimension");
    u_a.norm().max(u_b.norm())
}

/// Certifies an optimal solution against `[rho_min, rho_max]` with an
/// absolute tolerance band of `tol` on both sides.
pub fn certify(
    solution: &Solution,
    rho_min: f64,
    rho_max: f64,
    tol: f64,
) -> Result<CertificationReport> {
    solution
        .require_optimal()
        .map_err(|_| Error::Contract("certification requires an optimal solution".to_string()))?;
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::validation("tolerance must be non-negative"));
    }

    let mut vertex_violations = Vec::new();
    for (i, u) in solution.u.iter().enumerate() {
        let norm = u.norm();
        if norm < rho_min - tol {
            vertex_violations.push(VertexViolation { index: i, norm, kind: ViolationKind::Below });
        } else if norm > rho_max + tol {
            vertex_violations.push(VertexViolation { index: i, norm, kind: ViolationKind::Above });
        }
    }

    let mut edge_violations = Vec::new();
    let mut edge_min_norms = Vec::new();
    let mut edge_max_norms = Vec::new();
    for i in 0..solution.u.len().saturating_sub(1) {
        let min_norm = edge_min_norm(&solution.u[i], &solution.u[i + 1]);
        let max_norm = edge_max_norm(&solution.u[i], &solution.u[i + 1]);
        edge_min_norms.push(min_norm);
        edge_max_norms.push(max_norm);
        if min_norm < rho_min - tol {
            edge_violations.push(EdgeViolation {
                edge: (i, i + 1),
                min_norm,
                max_norm,
                kind: ViolationKind::Below,
            });
        } else if max_norm > rho_max + tol {
            edge_violations.push(EdgeViolation {
                edge: (i, i + 1),
                min_norm,
                max_norm,
                kind: ViolationKind::Above,
            });
        }
    }

    let eta_n_norm = solution
        .eta
        .last()
        .map(|e| e.amax())
        .unwrap_or(0.0);

    Ok(CertificationReport {
        vertex_violations,
        edge_violations,
        eta_n_norm,
        eta_n_zero: eta_n_zero(solution, crate::program::SolverSettings::default().eta_threshold),
        vertex_condition_failures: Vec::new(),
        tolerance: tol,
        edge_min_norms,
        edge_max_norms,
    })
}

/// Fills in the per-vertex dual-condition failures of a report.
pub fn with_vertex_conditions(
    mut report: CertificationReport,
    solution: &Solution,
    disc: &DiscreteSystem,
    threshold: f64,
) -> Result<CertificationReport> {
    let mut failures = Vec::new();
    for i in 0..solution.n_vertices() {
        if !vertex_condition(solution, disc, i, threshold)? {
            failures.push(i);
        }
    }
    report.vertex_condition_failures = failures;
    Ok(report)
}

/// Dual-based sufficient condition for the annulus bound to hold at a
/// vertex: the control-space image of the relevant multiplier is nonzero.
///
/// Vertex 0 tests `B0' eta_1`, the last vertex tests `B1' eta_N`, interior
/// vertices test `(B0 + A B1)' eta_i`. "Nonzero" means the infinity norm
/// exceeds `threshold * (1 + |eta|_inf)`.
pub fn vertex_condition(
    solution: &Solution,
    disc: &DiscreteSystem,
    index: usize,
    threshold: f64,
) -> Result<bool> {
    let n_vert = solution.n_vertices();
    if index >= n_vert {
        return Err(Error::validation(format!(
            "vertex index {index} out of range 0..{n_vert}"
        )));
    }
    if solution.eta.len() != disc.n_segments {
        return Err(Error::Contract("solution lacks dynamics multipliers".to_string()));
    }

    let vector = if index == 0 {
        disc.b0.transpose() * &solution.eta[0]
    } else if index == n_vert - 1 {
        disc.b1.transpose() * &solution.eta[disc.n_segments - 1]
    } else {
        (&disc.b0 + &disc.a * &disc.b1).transpose() * &solution.eta[index]
    };
    let scale = 1.0 + solution.eta_inf_norm();
    Ok(vector.amax() > threshold * scale)
}

/// Whether the terminal dynamics multiplier is numerically zero, at a
/// threshold scaled by the terminal cost weight.
pub fn eta_n_zero(solution: &Solution, eps_eta: f64) -> bool {
    let norm = solution.eta.last().map(|e| e.amax()).unwrap_or(0.0);
    norm <= eps_eta * solution.terminal_weight.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{SolveStatus, Solution};
    use approx::assert_abs_diff_eq;
    use nalgebra::{dvector, DMatrix};

    fn made_solution(u: Vec<DVector<f64>>, eta: Vec<DVector<f64>>) -> Solution {
        let n = u.len();
        Solution {
            x: vec![DVector::zeros(2); n],
            u,
            sigma: vec![5.0; n],
            eta,
            mu1: DVector::zeros(2),
            mu2: DVector::zeros(0),
            cost: 0.0,
            status: SolveStatus::Optimal,
            duality_gap: 0.0,
            terminal_weight: 100.0,
            solver_iterations: 0,
            raw_status: "test".to_string(),
        }
    }

    #[test]
    fn delta_bound_values() {
        assert_abs_diff_eq!(delta_bound(4.5, 4.0).unwrap(), 4.1231, epsilon = 1e-3);
        assert_abs_diff_eq!(delta_bound(3.0, 3.0).unwrap(), 0.0, epsilon = 1e-15);
        // 3-4-5 triple
        assert_abs_diff_eq!(delta_bound(5.0, 4.0).unwrap(), 6.0, epsilon = 1e-12);
        assert!(delta_bound(3.9, 4.0).is_err());
    }

    #[test]
    fn edge_min_norm_cases() {
        let a = dvector![3.0, 4.0];
        assert_abs_diff_eq!(edge_min_norm(&a, &a), 5.0, epsilon = 1e-12);

        let a = dvector![1.0, 0.0];
        let b = dvector![-1.0, 0.0];
        assert_abs_diff_eq!(edge_min_norm(&a, &b), 0.0, epsilon = 1e-12);

        let a = dvector![1.0, 1.0];
        let b = dvector![-1.0, 1.0];
        assert_abs_diff_eq!(edge_min_norm(&a, &b), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn edge_min_norm_uses_endpoint_when_foot_outside() {
        let a = dvector![1.0, 1.0];
        let b = dvector![2.0, 1.0];
        // Perpendicular foot at x = 0 lies outside [a, b].
        assert_abs_diff_eq!(edge_min_norm(&a, &b), a.norm(), epsilon = 1e-12);
    }

    #[test]
    fn edge_max_norm_cases() {
        assert_abs_diff_eq!(
            edge_max_norm(&dvector![3.0, 4.0], &dvector![0.0, 0.0]),
            5.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            edge_max_norm(&dvector![3.0, 4.0], &dvector![3.0, 4.0]),
            5.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            edge_max_norm(&dvector![1.0, 0.0], &dvector![0.0, 1.0]),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn certify_clean_band() {
        let u = vec![dvector![5.0, 0.0], dvector![4.0, 3.0], dvector![3.0, 4.0]];
        let eta = vec![dvector![1.0, 0.0], dvector![1.0, 0.0]];
        let solution = made_solution(u, eta);
        let report = certify(&solution, 4.0, 6.0, 1e-4).unwrap();
        assert_eq!(report.n_vertex_violations(), 0);
        assert_eq!(report.n_edge_violations(), 0);
        assert_eq!(report.edge_min_norms.len(), 2);
    }

    #[test]
    fn certify_flags_edge_through_origin() {
        let u = vec![dvector![5.0, 0.0], dvector![-5.0, 0.0]];
        let solution = made_solution(u, vec![dvector![1.0, 0.0]]);
        let report = certify(&solution, 4.0, 6.0, 1e-4).unwrap();
        assert_eq!(report.n_vertex_violations(), 0);
        assert_eq!(report.n_edge_violations(), 1);
        assert_eq!(report.edge_violations[0].kind, ViolationKind::Below);
        assert_abs_diff_eq!(report.edge_violations[0].min_norm, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn certify_rejects_non_optimal_input() {
        let mut solution = made_solution(vec![dvector![5.0, 0.0]], vec![]);
        solution.status = SolveStatus::NumericalFailure;
        assert!(matches!(
            certify(&solution, 4.0, 6.0, 1e-4),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn boundary_vertices_are_never_violations() {
        // A vertex with ||u|| = sigma in [rho_min, rho_max] sits on the
        // slice boundary and must pass.
        let u = vec![dvector![4.0, 0.0], dvector![6.0, 0.0]];
        let solution = made_solution(u, vec![dvector![1.0, 0.0]]);
        let report = certify(&solution, 4.0, 6.0, 0.0).unwrap();
        assert_eq!(report.n_vertex_violations(), 0);
    }

    #[test]
    fn vertex_condition_zero_eta_fails_everywhere() {
        let disc = crate::discretization::DiscreteSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::from_element(2, 1, 1.0),
            DMatrix::from_element(2, 1, 1.0),
            1.0,
            2,
            2.0,
        )
        .unwrap();
        let u = vec![dvector![1.0], dvector![1.0], dvector![1.0]];
        let eta = vec![DVector::zeros(2), DVector::zeros(2)];
        let solution = made_solution(u, eta);
        for i in 0..3 {
            assert!(!vertex_condition(&solution, &disc, i, 1e-5).unwrap());
        }
        assert!(vertex_condition(&solution, &disc, 3, 1e-5).is_err());
    }

    #[test]
    fn vertex_condition_interior_uses_combined_input_matrix() {
        // Double-integrator FOH matrices: B0 + A B1 = [[dt^2 I], [dt I]].
        let sys = {
            let mut a_c = DMatrix::zeros(6, 6);
            for k in 0..3 {
                a_c[(k, k + 3)] = 1.0;
            }
            let mut b_c = DMatrix::zeros(6, 3);
            for k in 0..3 {
                b_c[(k + 3, k)] = 1.0;
            }
            crate::discretization::ContinuousSystem::new(a_c, b_c).unwrap()
        };
        let disc = crate::discretization::integrate_stm(&sys, 4.0, 16, 64).unwrap();
        let mut eta = vec![DVector::zeros(6); 16];
        eta[5] = dvector![1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let u = vec![dvector![5.0, 0.0, 0.0]; 17];
        let solution = made_solution(u, eta);
        // (B0 + A B1)' eta_5 = (dt^2, 0, 0), nonzero.
        assert!(vertex_condition(&solution, &disc, 5, 1e-5).unwrap());
        // Same dual at the last vertex feeds through B1 only, and eta_N = 0.
        assert!(!vertex_condition(&solution, &disc, 16, 1e-5).unwrap());
    }

    #[test]
    fn last_vertex_condition_forced_false_when_b1_zero() {
        let disc = crate::discretization::DiscreteSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::from_element(2, 1, 1.0),
            DMatrix::zeros(2, 1),
            1.0,
            1,
            1.0,
        )
        .unwrap();
        let solution = made_solution(
            vec![dvector![1.0], dvector![1.0]],
            vec![dvector![3.0, -2.0]],
        );
        assert!(!vertex_condition(&solution, &disc, 1, 1e-5).unwrap());
    }

    #[test]
    fn eta_n_zero_thresholds() {
        let solution = made_solution(
            vec![dvector![1.0], dvector![1.0]],
            vec![DVector::zeros(2)],
        );
        assert!(eta_n_zero(&solution, 1e-5));

        let solution = made_solution(
            vec![dvector![1.0], dvector![1.0]],
            vec![dvector![1.0, 0.0]],
        );
        // terminal weight 100 scales the threshold to 1e-3 < 1.
        assert!(!eta_n_zero(&solution, 1e-5));
    }
}
