//! Invariants of the linearized evolution spectra.

mod common;

use marangoni_core::linstab::{dispersion, spectrum_with, PerturbationClass, SpectrumOptions};
use marangoni_core::stationary::StationaryState;
use marangoni_core::{make_lattice, SymmetricField};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flat_spectrum_is_the_dispersion_relation(lat in common::lattice(), m in 0.0..20.0f64, g in 0.0..3.0f64) {
        let state = StationaryState::flat(&lat, m);
        let report = spectrum_with(&state, g, PerturbationClass::CoPeriodic, &SpectrumOptions::symmetric()).unwrap();
        let mut expect: Vec<f64> = lat.orbits()[1..]
            .iter()
            .map(|o| dispersion(lat.dual_wavevector(o.representative.0, o.representative.1), m, g))
            .collect();
        expect.sort_by(|a, b| b.total_cmp(a));
        prop_assert_eq!(report.eigenvalues.len(), expect.len());
        let scale = expect.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        for (got, want) in report.eigenvalues.iter().zip(&expect) {
            prop_assert!((got - want).abs() <= 1e-12 * scale, "{got} vs {want}");
        }
        prop_assert!(report.eigenvalues_imag.iter().all(|&im| im.abs() <= 1e-12 * scale));
    }

    #[test]
    fn subharmonic_spectrum_contains_the_coperiodic_one(kind in common::kind(), k0 in 0.7..1.3f64, w in common::weights(), amp in 0.05..0.5f64, m in 4.0..12.0f64) {
        let lat = make_lattice(kind, k0, 8).unwrap();
        let v: SymmetricField = common::smooth_field(&lat, &w, amp);
        let state = StationaryState { v, m, multiplier: 0.0 };
        let opts = SpectrumOptions::symmetric();
        let co = spectrum_with(&state, 1.0, PerturbationClass::CoPeriodic, &opts).unwrap();
        let sub = spectrum_with(&state, 1.0, PerturbationClass::Subharmonic(2), &opts).unwrap();
        prop_assert!(sub.eigenvalues.len() > co.eigenvalues.len());
        let scale = co.eigenvalues.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        for (re, im) in co.eigenvalues.iter().zip(&co.eigenvalues_imag) {
            let gap = sub
                .eigenvalues
                .iter()
                .zip(&sub.eigenvalues_imag)
                .map(|(r2, i2)| (re - r2).hypot(im - i2))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(gap <= 1e-7 * scale, "eigenvalue {re}{im:+}i missing (gap {gap})");
        }
    }
}
