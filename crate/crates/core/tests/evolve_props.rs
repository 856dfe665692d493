//! Invariants of the IMEX time stepper.

mod common;

use marangoni_core::continuation::{seed_branch, ContinuationConfig};
use marangoni_core::evolve::{rhs, EvolutionState};
use marangoni_core::localbif::bifurcation_point;
use marangoni_core::stationary::ProblemParams;
use marangoni_core::{make_lattice, LatticeKind, PeriodicField, SymmetricField};
use num_complex::Complex64;
use proptest::prelude::*;

/// Real field with random coefficients on a few low modes of both parities.
fn asymmetric_field(lat: &std::sync::Arc<marangoni_core::Lattice>, w: &[f64], amp: f64, mean: f64) -> PeriodicField {
    let mut f = PeriodicField::zeros(lat);
    let mut k = 0;
    for n1 in 0..=2i32 {
        for n2 in -2..=2i32 {
            if (n1, n2) <= (0, 0) {
                continue;
            }
            let z = Complex64::new(w[k], w[k + 1]) * amp;
            k += 2;
            f.set_coefficient((n1, n2), z);
            f.set_coefficient((-n1, -n2), z.conj());
        }
    }
    f.set_coefficient((0, 0), Complex64::new(mean, 0.0));
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mass_is_conserved(kind in common::kind(), w in common::weights(), mean in -0.2..0.2f64, m in 2.0..10.0f64) {
        let lat = make_lattice(kind, 1.0, 12).unwrap();
        let v = asymmetric_field(&lat, &w, 0.02, mean);
        prop_assert!(rhs(&v, m, 1.0).unwrap().mean() == 0.0);
        let start = EvolutionState::new(v, ProblemParams::new(1.0, m).unwrap(), 1e-3).unwrap();
        let mass0 = start.mass();
        let end = start.run(200, |_| {}).unwrap();
        prop_assert!((end.mass() - mass0).abs() <= 1e-14);
        prop_assert!(end.v.norm_l2() > 0.0);
    }

    #[test]
    fn symmetric_data_stays_symmetric(lat in common::lattice(), w in common::weights(), m in 2.0..10.0f64) {
        let sym = common::smooth_field(&lat, &w, 0.3);
        let full = PeriodicField::from_symmetric(&sym);
        let params = ProblemParams::new(1.0, m).unwrap();
        let a = EvolutionState::new(full, params, 1e-3).unwrap().run(50, |_| {}).unwrap();
        let b = EvolutionState::new(sym, params, 1e-3).unwrap().run(50, |_| {}).unwrap();
        prop_assert!(a.v.symmetry_defect() <= 1e-12);
        prop_assert!(a.v.project_symmetric().max_abs_diff(&b.v) <= 1e-12);
    }
}

fn evolve_to(v: &SymmetricField, m: f64, t: f64, dt: f64) -> SymmetricField {
    let steps = (t / dt).round() as usize;
    let start = EvolutionState::new(v.clone(), ProblemParams::new(1.0, m).unwrap(), dt).unwrap();
    start.run(steps, |_| {}).unwrap().v
}

/// The global error at a fixed time halves with the step size.
#[test]
fn first_order_convergence_in_the_step_size() {
    for kind in [LatticeKind::Square, LatticeKind::Hexagon] {
        let lat = make_lattice(kind, 1.0, 12).unwrap();
        let w: Vec<f64> = (0..200).map(|i| ((i * 7919 % 211) as f64 / 105.0) - 1.0).collect();
        let v = common::smooth_field(&lat, &w, 0.3);
        let (t, m) = (0.2, 6.0);
        let reference = evolve_to(&v, m, t, 0.02 / 256.0);
        let errors: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&dt| (&evolve_to(&v, m, t, dt) - &reference).norm_l2())
            .collect();
        for pair in errors.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((1.8..=2.2).contains(&ratio), "{kind:?}: errors {errors:?}");
        }
    }
}

/// A converged stationary state stays put under the time stepper.
#[test]
fn stationary_states_do_not_drift() {
    for (kind, direction) in [(LatticeKind::Square, 1), (LatticeKind::Hexagon, -1)] {
        let lat = make_lattice(kind, 1.0, 12).unwrap();
        let info = bifurcation_point(&lat, 1.0, 1).unwrap();
        let branch = seed_branch(&info, direction, 0.3, &ContinuationConfig::default()).unwrap();
        let state = &branch.points[0].state;
        assert!(rhs(&state.v, state.m, 1.0).unwrap().norm_l2() <= 1e-6);
        let end = evolve_to(&state.v, state.m, 1.0, 1e-4);
        let drift = (&end - &state.v).norm_l2();
        assert!(drift <= 1e-5, "{kind:?}: drift {drift}");
    }
}
