//! Shared generators for the property suites.
#![allow(dead_code)]

use std::sync::Arc;

use marangoni_core::{make_lattice, Lattice, LatticeKind, SymmetricField};
use proptest::prelude::*;

pub fn kind() -> impl Strategy<Value = LatticeKind> {
    prop_oneof![Just(LatticeKind::Square), Just(LatticeKind::Hexagon)]
}

/// Small lattices: either kind, `k0` in `[0.5, 1.5]`, `N` in `{8, 12, 16}`.
pub fn lattice() -> impl Strategy<Value = Arc<Lattice>> {
    (kind(), 0.5..1.5f64, prop_oneof![Just(8usize), Just(12), Just(16)])
        .prop_map(|(kind, k0, n)| make_lattice(kind, k0, n).unwrap())
}

/// Raw weights in `[-1, 1]`, one per orbit of the largest test lattice.
pub fn weights() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0..1.0f64, 200)
}

/// Mean-zero symmetric field with coefficients decaying like
/// `exp(-|gamma|^2 / (2 k0^2))`, scaled so `max |v| = amp` on the fine grid.
pub fn smooth_field(lat: &Arc<Lattice>, w: &[f64], amp: f64) -> SymmetricField {
    let k2 = lat.k0() * lat.k0();
    let coeffs: Vec<f64> = (0..lat.num_orbits())
        .map(|o| {
            if o == 0 {
                return 0.0;
            }
            let q = lat.wavenumber_sq(lat.orbits()[o].representative);
            w[o % w.len()] * (-0.5 * q / k2).exp()
        })
        .collect();
    let v = SymmetricField::from_coeffs(lat, coeffs).unwrap();
    let grid = v.fine_grid();
    let peak = grid.max().abs().max(grid.min().abs());
    if peak == 0.0 {
        v
    } else {
        v.scaled(amp / peak)
    }
}

/// Same as [`smooth_field`] but restricted to orbits with
/// `|n1|, |n2| <= limit` in index coordinates.
pub fn band_limited(lat: &Arc<Lattice>, w: &[f64], amp: f64, limit: i32) -> SymmetricField {
    let mut v = smooth_field(lat, w, 1.0);
    for (o, orbit) in lat.orbits().iter().enumerate() {
        if orbit.members.iter().any(|&(a, b)| a.abs() > limit || b.abs() > limit) {
            v.coeffs_mut()[o] = 0.0;
        }
    }
    let grid = v.fine_grid();
    let peak = grid.max().abs().max(grid.min().abs());
    v.scaled(amp / peak.max(1e-300))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
