use jumpfbsde::{stencil, ExtrapolationPolicy, PiecewiseLagrangeInterpolant, SpatialMesh};
use proptest::prelude::*;

fn mesh(lo: f64, n: usize, dx: f64) -> SpatialMesh {
    SpatialMesh::uniform((lo, lo + n as f64 * dx), dx).unwrap()
}

proptest! {
    #[test]
    fn reproduces_polynomials_of_its_degree(
        lo in -3.0..3.0f64,
        n in 4usize..40,
        dx in 0.01..0.5f64,
        degree in 1usize..=3,
        coeffs in prop::collection::vec(-2.0..2.0f64, 4),
        u in 0.0..=1.0f64,
    ) {
        let m = mesh(lo, n, dx);
        let poly = |x: f64| coeffs[..=degree].iter().rev().fold(0.0, |acc, c| acc * (x - lo) + c);
        let values: Vec<f64> = m.points().iter().map(|&x| poly(x)).collect();
        let f = PiecewiseLagrangeInterpolant::new(&m, &values, degree, ExtrapolationPolicy::NearestStencil).unwrap();
        let (a, b) = m.padded_extent();
        let x = a + u * (b - a);
        let scale = 1.0 + values.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        prop_assert!((f.eval(x).unwrap() - poly(x)).abs() <= 1e-10 * scale);
    }

    #[test]
    fn interpolates_mesh_values(
        n in 4usize..30,
        degree in 1usize..=3,
        values in prop::collection::vec(-5.0..5.0f64, 31),
    ) {
        let m = mesh(0.0, n, 0.1);
        let v = &values[..m.len()];
        let f = PiecewiseLagrangeInterpolant::new(&m, v, degree, ExtrapolationPolicy::NearestStencil).unwrap();
        for (x, y) in m.points().iter().zip(v) {
            prop_assert!((f.eval(*x).unwrap() - y).abs() < 1e-12);
        }
    }

    #[test]
    fn stencil_is_contiguous_and_in_range(
        n in 4usize..50,
        degree in 1usize..=3,
        x in -2.0..7.0f64,
    ) {
        let m = mesh(0.0, n, 0.1);
        let s = stencil(&m, x, degree);
        prop_assert_eq!(s.len(), degree + 1);
        prop_assert!(s.end <= m.len());
        let pts = m.points();
        if x >= pts[0] && x <= pts[m.len() - 1] {
            prop_assert!(pts[s.start] <= x + 1e-12 && x <= pts[s.end - 1] + 1e-12);
        }
    }

    #[test]
    fn flat_policy_holds_end_values(
        degree in 1usize..=3,
        beyond in 0.0..10.0f64,
        values in prop::collection::vec(-5.0..5.0f64, 11),
    ) {
        let m = mesh(0.0, 10, 0.1);
        let f = PiecewiseLagrangeInterpolant::new(&m, &values, degree, ExtrapolationPolicy::Flat).unwrap();
        let (a, b) = m.padded_extent();
        prop_assert!((f.eval(b + beyond).unwrap() - values[10]).abs() < 1e-12);
        prop_assert!((f.eval(a - beyond).unwrap() - values[0]).abs() < 1e-12);
    }
}
