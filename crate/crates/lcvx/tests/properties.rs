//! Property tests for the pure numeric operations.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use lcvx::{
    delta_bound, discretize_zoh, edge_max_norm, edge_min_norm, integrate_stm, ContinuousSystem,
};

fn vector_strategy(dim: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-5.0..5.0f64, dim).prop_map(DVector::from_vec)
}

/// Householder-style rotation built from two angles; any orthogonal map
/// works for the invariance check.
fn rotation_2d(theta: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
}

proptest! {
    #[test]
    fn edge_min_norm_is_symmetric(a in vector_strategy(3), b in vector_strategy(3)) {
        let lr = edge_min_norm(&a, &b);
        let rl = edge_min_norm(&b, &a);
        prop_assert!((lr - rl).abs() <= 1e-12 * (1.0 + lr.abs()));
    }

    #[test]
    fn edge_min_norm_invariant_under_rotation(
        a in vector_strategy(2),
        b in vector_strategy(2),
        theta in 0.0..std::f64::consts::TAU,
    ) {
        let r = rotation_2d(theta);
        let before = edge_min_norm(&a, &b);
        let after = edge_min_norm(&(&r * &a), &(&r * &b));
        prop_assert!((before - after).abs() <= 1e-9 * (1.0 + before));
    }

    #[test]
    fn edge_min_norm_below_endpoints_and_max_at_endpoints(
        a in vector_strategy(4),
        b in vector_strategy(4),
    ) {
        let min = edge_min_norm(&a, &b);
        let max = edge_max_norm(&a, &b);
        prop_assert!(min <= a.norm() + 1e-12);
        prop_assert!(min <= b.norm() + 1e-12);
        prop_assert!((max - a.norm().max(b.norm())).abs() <= 1e-12);
        prop_assert!(min <= max + 1e-12);
    }

    #[test]
    fn edge_min_norm_bounded_by_sampling(
        a in vector_strategy(3),
        b in vector_strategy(3),
        t in 0.0..1.0f64,
    ) {
        // The closed form is a true lower bound of the interpolant norm.
        let sample = (&a + (&b - &a) * t).norm();
        prop_assert!(edge_min_norm(&a, &b) <= sample + 1e-12);
    }

    #[test]
    fn rate_bound_is_monotone_and_anchored(
        rho_min in 0.1..5.0f64,
        gap1 in 0.0..3.0f64,
        gap2 in 0.001..3.0f64,
    ) {
        let low = delta_bound(rho_min + gap1, rho_min).unwrap();
        let high = delta_bound(rho_min + gap1 + gap2, rho_min).unwrap();
        prop_assert!(delta_bound(rho_min, rho_min).unwrap() == 0.0);
        prop_assert!(low < high);
    }

    #[test]
    fn hold_responses_agree_for_constant_control(
        entries in prop::collection::vec(-1.0..1.0f64, 9),
        inputs in prop::collection::vec(-1.0..1.0f64, 6),
        control in prop::collection::vec(-2.0..2.0f64, 2),
    ) {
        // Feeding the same control into both vertices of a segment must
        // reproduce the piecewise-constant response.
        let a_c = DMatrix::from_row_slice(3, 3, &entries);
        let b_c = DMatrix::from_row_slice(3, 2, &inputs);
        let sys = ContinuousSystem::new(a_c, b_c).unwrap();
        let disc = integrate_stm(&sys, 1.0, 2, 64).unwrap();
        let (_, b_zoh) = discretize_zoh(&sys, 1.0, 2).unwrap();
        let u = DVector::from_vec(control);
        let foh = &disc.b0 * &u + &disc.b1 * &u;
        let zoh = &b_zoh * &u;
        prop_assert!((foh - zoh).amax() <= 1e-9);
    }

    #[test]
    fn sampled_shifts_stay_inside_the_box(
        d in 1usize..6,
        eps in 0.0..1e-3f64,
        seed in 0u64..1000,
    ) {
        let spec = lcvx::sample_q(d, eps, seed).unwrap();
        prop_assert_eq!(spec.q.len(), d);
        prop_assert!(spec.q.iter().all(|v| v.abs() <= eps));
    }
}
