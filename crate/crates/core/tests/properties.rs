use proptest::prelude::*;
use qcc::phase::PhasePoint;
use qcc::transforms::PhaseSpaceMeasure;
use qcc::transport::{wasserstein, wasserstein_to_point, TransportProblem};

fn measure(atoms: &[(f64, f64, f64)], shift: (f64, f64)) -> PhaseSpaceMeasure {
    let points: Vec<f64> = atoms.iter().flat_map(|a| [a.0 + shift.0, a.1 + shift.1]).collect();
    let masses: Vec<f64> = atoms.iter().map(|a| a.2).collect();
    PhaseSpaceMeasure::from_flat(1, 0.1, points, masses).unwrap().normalized().unwrap()
}

fn atoms() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, 0.05..1.0f64), 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn translation_invariance(a in atoms(), b in atoms(), v in (-2.0..2.0f64, -2.0..2.0f64), p in 1.0..3.0f64) {
        let d = wasserstein(&TransportProblem::new(measure(&a, (0.0, 0.0)), measure(&b, (0.0, 0.0)), p)).unwrap();
        let e = wasserstein(&TransportProblem::new(measure(&a, v), measure(&b, v), p)).unwrap();
        prop_assert!((d.distance - e.distance).abs() <= 1e-7 * (1.0 + d.distance) + d.bound_gap + e.bound_gap);
    }

    #[test]
    fn rigid_shift_costs_its_length(a in atoms(), v in (-2.0..2.0f64, -2.0..2.0f64), p in 1.0..3.0f64) {
        let d = wasserstein(&TransportProblem::new(measure(&a, (0.0, 0.0)), measure(&a, v), p)).unwrap();
        let len = v.0.hypot(v.1);
        prop_assert!((d.distance - len).abs() <= 1e-7 * (1.0 + len) + d.bound_gap, "{} vs {}", d.distance, len);
    }

    #[test]
    fn dirac_target_matches_closed_form(a in atoms(), x in -3.0..3.0f64, y in -3.0..3.0f64, p in 1.0..3.0f64) {
        let mu = measure(&a, (0.0, 0.0));
        let alpha = PhasePoint::new(vec![x, y]).unwrap();
        let d = wasserstein(&TransportProblem::new(mu.clone(), PhaseSpaceMeasure::dirac(&alpha, 0.1), p)).unwrap();
        let closed = wasserstein_to_point(&mu, &alpha, p).unwrap();
        prop_assert!((d.distance - closed).abs() <= 1e-7 * (1.0 + closed) + d.bound_gap);
    }
}
