//! Local bifurcation expansion: the one-term ansatz has an `O(s^2)` residual.

mod common;

use marangoni_core::localbif::bifurcation_point;
use marangoni_core::make_lattice;
use marangoni_core::stationary::residual;
use proptest::prelude::*;

/// Least-squares slope of `log y` against `log x`.
fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linear_ansatz_residual_is_quadratic(kind in common::kind(), k0 in 0.6..1.4f64, g in 0.2..2.0f64, sign in prop_oneof![Just(-1.0), Just(1.0)]) {
        let lat = make_lattice(kind, k0, 12).unwrap();
        let info = bifurcation_point(&lat, g, 1).unwrap();
        let amplitudes: Vec<f64> = (0..5).map(|i| 1e-4 * 10f64.powf(0.5 * i as f64)).collect();
        let norms: Vec<f64> = amplitudes
            .iter()
            .map(|&a| {
                let s = sign * a;
                let v = info.kernel.scaled(s);
                residual(&v, info.m_crit + info.mdot0 * s, g).unwrap().norm_x()
            })
            .collect();
        let slope = loglog_slope(&amplitudes, &norms);
        prop_assert!((1.9..=2.1).contains(&slope), "slope {slope}, norms {norms:?}");
    }
}

/// The square curvature closed form against fully nonlinear solutions:
/// `2 (M(s) - M*) / s²` on corrected seed points for `g != 1`.
#[test]
fn square_curvature_matches_continued_solutions() {
    use marangoni_core::continuation::{seed_branch, ContinuationConfig};
    use marangoni_core::localbif::closed_form_coefficients;
    use marangoni_core::LatticeKind;
    for (g, k0) in [(0.5, 1.0), (2.0, 1.0), (2.0, 0.5)] {
        let lat = make_lattice(LatticeKind::Square, k0, 32).unwrap();
        let info = bifurcation_point(&lat, g, 1).unwrap();
        let closed = closed_form_coefficients(LatticeKind::Square, g, k0).1.unwrap();
        let s = 0.005;
        let branch = seed_branch(&info, 1, s, &ContinuationConfig::default()).unwrap();
        let measured = 2.0 * (branch.points[0].state.m - info.m_crit) / (s * s);
        assert!((measured - closed).abs() < 1e-4 * closed.abs(), "g = {g}, k0 = {k0}: {measured} vs {closed}");
    }
}
