//! Dispersion relation, critical values and spectra of the linearized
//! evolution operator about stationary states.
//!
//! About `h = 1 + v` the linearization of
//! `∂t v = -∇·(h³∇Δv - g h³∇v + M h²/(1+h)²∇v)` is
//! `u ↦ -∇·(a ∇Δu + b ∇u + u c)` with `a = h³`, `b = -g h³ + M h²/(1+h)²`
//! and `c = 3h²∇Δv - 3g h²∇v + 2M h/(1+h)³ ∇v`. On Fourier modes its matrix is
//!
//! ```text
//! E(γ, γ') = -|γ'|² (γ·γ') â(γ-γ') + (γ·γ') b̂(γ-γ') - i γ·ĉ(γ-γ'),
//! ```
//!
//! which is real for even states. The symmetric restriction sums `E` over
//! orbits; the full space splits into cosine and sine blocks.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{gradient_of_table, synthesize_table, SymmetricField};
use crate::lattice::{make_lattice, Lattice, ModeIndex};
use crate::linalg;
use crate::stationary::StationaryState;

/// Eigenvalues with `|Re λ| <= STABILITY_TOL` count as marginal.
pub const STABILITY_TOL: f64 = 1e-8;

/// `λ(k) = -|k|⁴ - (g - M/4)|k|²`.
pub fn dispersion(k: [f64; 2], m: f64, g: f64) -> f64 {
    let k2 = k[0] * k[0] + k[1] * k[1];
    -k2 * k2 - (g - m / 4.0) * k2
}

/// `M*(k0) = 4g + 4k0²`.
pub fn critical_marangoni(g: f64, k0: f64) -> f64 {
    4.0 * g + 4.0 * k0 * k0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PerturbationClass {
    CoPeriodic,
    /// Perturbations on the coarser dual lattice `m Γ`.
    Superharmonic(u32),
    /// Perturbations on the finer dual lattice `Γ / m` (cell `m` times larger).
    Subharmonic(u32),
}

impl fmt::Display for PerturbationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationClass::CoPeriodic => write!(f, "co-periodic"),
            PerturbationClass::Superharmonic(m) => write!(f, "superharmonic({m})"),
            PerturbationClass::Subharmonic(m) => write!(f, "subharmonic({m})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub perturbation_class: PerturbationClass,
    /// Real parts, sorted in descending order.
    pub eigenvalues: Vec<f64>,
    /// Imaginary parts matching `eigenvalues`.
    pub eigenvalues_imag: Vec<f64>,
    pub n_unstable: usize,
    pub symmetric_restriction: bool,
    pub stability_tol: f64,
}

impl SpectrumReport {
    fn new(class: PerturbationClass, symmetric: bool, mut values: Vec<Complex64>) -> Self {
        linalg::sort_descending(&mut values);
        let n_unstable = values.iter().filter(|z| z.re > STABILITY_TOL).count();
        Self {
            perturbation_class: class,
            eigenvalues: values.iter().map(|z| z.re).collect(),
            eigenvalues_imag: values.iter().map(|z| z.im).collect(),
            n_unstable,
            symmetric_restriction: symmetric,
            stability_tol: STABILITY_TOL,
        }
    }

    pub fn leading(&self) -> Option<f64> {
        self.eigenvalues.first().copied()
    }

    pub fn verdict(&self) -> StabilityVerdict {
        match self.leading() {
            Some(l) if l > STABILITY_TOL => StabilityVerdict::Unstable,
            Some(l) if l < -STABILITY_TOL => StabilityVerdict::Stable,
            Some(_) => StabilityVerdict::Marginal,
            None => StabilityVerdict::Stable,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityVerdict {
    Stable,
    Unstable,
    Marginal,
}

/// Options for assembling the linearization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumOptions {
    pub symmetric: bool,
    /// Keep only perturbation modes with `|gamma|^2 <= limit` (Galerkin truncation).
    pub max_wavenumber_sq: Option<f64>,
}

impl SpectrumOptions {
    pub fn symmetric() -> Self {
        Self {
            symmetric: true,
            max_wavenumber_sq: None,
        }
    }

    pub fn full() -> Self {
        Self {
            symmetric: false,
            max_wavenumber_sq: None,
        }
    }
}

/// Normalized oversampled spectra of the coefficient fields `a`, `b`, `c`.
struct Coefficients {
    fine: usize,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    cx: Vec<Complex64>,
    cy: Vec<Complex64>,
}

fn coefficient_spectra(v: &SymmetricField, m: f64, g: f64) -> Result<Coefficients> {
    let lat = v.lattice();
    let fine = lat.fine_size();
    let table = v.spectral_table(fine);
    let vg = synthesize_table(lat, table.clone(), fine);
    let min_h = 1.0 + vg.min();
    if !(min_h > 0.0) {
        return Err(Error::DomainViolation { min_height: min_h });
    }
    let [gx, gy] = gradient_of_table(lat, &table, fine);
    let [lx, ly] = v.laplacian().gradient_grids(fine);
    let mut a = vg.clone();
    let mut b = vg.clone();
    let mut cx = vg.clone();
    let mut cy = vg.clone();
    for i in 0..fine * fine {
        let h = 1.0 + vg.values()[i];
        let h2 = h * h;
        let q = 1.0 + h;
        a.values_mut()[i] = h2 * h;
        b.values_mut()[i] = -g * h2 * h + m * h2 / (q * q);
        let dp = 2.0 * m * h / (q * q * q);
        cx.values_mut()[i] = 3.0 * h2 * lx.values()[i] - 3.0 * g * h2 * gx.values()[i] + dp * gx.values()[i];
        cy.values_mut()[i] = 3.0 * h2 * ly.values()[i] - 3.0 * g * h2 * gy.values()[i] + dp * gy.values()[i];
    }
    Ok(Coefficients {
        fine,
        a: a.spectrum(lat),
        b: b.spectrum(lat),
        cx: cx.spectrum(lat),
        cy: cy.spectrum(lat),
    })
}

impl Coefficients {
    fn entry(&self, lat: &Lattice, row: ModeIndex, col: ModeIndex) -> f64 {
        let diff = lat.wrap((row.0 - col.0, row.1 - col.1), self.fine);
        let gr = lat.dual_wavevector(row.0, row.1);
        let gc = lat.dual_wavevector(col.0, col.1);
        let dot = gr[0] * gc[0] + gr[1] * gc[1];
        let kc2 = gc[0] * gc[0] + gc[1] * gc[1];
        let i = Complex64::new(0.0, 1.0);
        let z = -self.a[diff] * (kc2 * dot) + self.b[diff] * dot - i * (self.cx[diff] * gr[0] + self.cy[diff] * gr[1]);
        z.re
    }
}

/// The state and mode set on which a perturbation class lives.
fn class_setting(state: &StationaryState, class: PerturbationClass) -> Result<(SymmetricField, u32, u32)> {
    let lat = state.v.lattice();
    match class {
        PerturbationClass::CoPeriodic => Ok((state.v.clone(), 1, 1)),
        PerturbationClass::Superharmonic(m) => {
            if m < 2 {
                return Err(Error::InvalidArgument("superharmonic factor must be at least 2"));
            }
            Ok((state.v.clone(), m, 1))
        }
        PerturbationClass::Subharmonic(m) => {
            if m < 2 {
                return Err(Error::InvalidArgument("subharmonic factor must be at least 2"));
            }
            let big = make_lattice(lat.kind(), lat.k0() / m as f64, lat.modes_per_dim() * m as usize)?;
            Ok((state.v.embed(&big, m as i32)?, 1, m))
        }
    }
}

/// Assembled linearization for one perturbation class.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub class: PerturbationClass,
    /// Lattice the perturbations live on (enlarged for subharmonic classes).
    pub lattice: Arc<Lattice>,
    pub symmetric: bool,
    /// Symmetric: orbit ids of the basis. Full: half-plane modes of the
    /// cosine and sine blocks.
    pub orbit_ids: Vec<usize>,
    pub modes: Vec<ModeIndex>,
    /// One matrix (symmetric) or the cosine and sine blocks (full).
    pub blocks: Vec<DMatrix<f64>>,
}

/// Assembles the linearized evolution operator restricted to mean-zero
/// perturbations of the given class.
pub fn linearization(state: &StationaryState, g: f64, class: PerturbationClass, opts: &SpectrumOptions) -> Result<Linearization> {
    let (v, stride, _) = class_setting(state, class)?;
    let lat = Arc::clone(v.lattice());
    let coeffs = coefficient_spectra(&v, state.m, g)?;
    let keep = |index: ModeIndex| {
        let s = stride as i32;
        index != (0, 0)
            && index.0 % s == 0
            && index.1 % s == 0
            && opts.max_wavenumber_sq.map_or(true, |l| lat.wavenumber_sq(index) <= l * (1.0 + 1e-12))
    };
    if opts.symmetric {
        let ids: Vec<usize> = (0..lat.num_orbits()).filter(|&o| keep(lat.orbits()[o].representative)).collect();
        let n = ids.len();
        let mut mat = DMatrix::zeros(n, n);
        for (i, &o) in ids.iter().enumerate() {
            let row = lat.orbits()[o].representative;
            for (j, &o2) in ids.iter().enumerate() {
                mat[(i, j)] = lat.orbits()[o2].members.iter().map(|&col| coeffs.entry(&lat, row, col)).sum();
            }
        }
        Ok(Linearization {
            class,
            lattice: lat,
            symmetric: true,
            orbit_ids: ids,
            modes: Vec::new(),
            blocks: vec![mat],
        })
    } else {
        let modes: Vec<ModeIndex> = lat
            .retained_modes()
            .map(|(_, m)| m)
            .filter(|&m| keep(m) && m > (0, 0))
            .collect();
        let n = modes.len();
        let mut cos = DMatrix::zeros(n, n);
        let mut sin = DMatrix::zeros(n, n);
        for (i, &r) in modes.iter().enumerate() {
            for (j, &c) in modes.iter().enumerate() {
                let plus = coeffs.entry(&lat, r, c);
                let minus = coeffs.entry(&lat, r, (-c.0, -c.1));
                cos[(i, j)] = plus + minus;
                sin[(i, j)] = plus - minus;
            }
        }
        Ok(Linearization {
            class,
            lattice: lat,
            symmetric: false,
            orbit_ids: Vec::new(),
            modes,
            blocks: vec![cos, sin],
        })
    }
}

/// Eigenvalues of the linearized evolution operator for one class.
pub fn evolution_linearization_spectrum(
    state: &StationaryState,
    g: f64,
    class: PerturbationClass,
    symmetric: bool,
) -> Result<SpectrumReport> {
    let opts = SpectrumOptions {
        symmetric,
        max_wavenumber_sq: None,
    };
    spectrum_with(state, g, class, &opts)
}

pub fn spectrum_with(state: &StationaryState, g: f64, class: PerturbationClass, opts: &SpectrumOptions) -> Result<SpectrumReport> {
    let lin = linearization(state, g, class, opts)?;
    let mut values = Vec::new();
    for block in &lin.blocks {
        values.extend(linalg::general_eigenvalues(block)?);
    }
    Ok(SpectrumReport::new(class, opts.symmetric, values))
}

/// Leading eigenvector of the co-periodic symmetric linearization, as a
/// mean-zero symmetric field with positive largest coefficient.
pub fn leading_symmetric_eigenvector(state: &StationaryState, g: f64) -> Result<SymmetricField> {
    let lin = linearization(state, g, PerturbationClass::CoPeriodic, &SpectrumOptions::symmetric())?;
    let mat = &lin.blocks[0];
    let values = linalg::general_eigenvalues(mat)?;
    let lead = values.first().ok_or(Error::InvalidArgument("empty perturbation space"))?;
    let vec = linalg::inverse_iteration(mat, lead.re)?;
    let mut coeffs = vec![0.0; lin.lattice.num_orbits()];
    for (i, &o) in lin.orbit_ids.iter().enumerate() {
        coeffs[o] = vec[i];
    }
    SymmetricField::from_coeffs(&lin.lattice, coeffs)
}

/// Co-periodic, superharmonic(2) and subharmonic(2) verdicts on the
/// symmetric restriction.
pub fn classify_stability(state: &StationaryState, g: f64) -> Result<Vec<(PerturbationClass, StabilityVerdict, SpectrumReport)>> {
    [
        PerturbationClass::CoPeriodic,
        PerturbationClass::Superharmonic(2),
        PerturbationClass::Subharmonic(2),
    ]
    .into_iter()
    .map(|class| {
        let report = evolution_linearization_spectrum(state, g, class, true)?;
        Ok((class, report.verdict(), report))
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeKind;

    #[test]
    fn dispersion_values() {
        assert_eq!(dispersion([0.0, 0.0], 3.0, 1.0), 0.0);
        assert_eq!(dispersion([1.0, 0.0], 8.0, 1.0), 0.0);
        assert_eq!(dispersion([0.0, 1.0], 4.0, 1.0), -1.0);
        assert_eq!(critical_marangoni(1.0, 0.0), 4.0);
        assert_eq!(critical_marangoni(1.0, 1.0), 8.0);
        assert_eq!(critical_marangoni(1.0, 2.0 * 0.5), 8.0);
    }

    #[test]
    fn flat_spectrum_is_the_dispersion_relation() {
        for kind in [LatticeKind::Square, LatticeKind::Hexagon] {
            let lat = make_lattice(kind, 1.0, 16).unwrap();
            let flat = StationaryState::flat(&lat, 8.0);
            let report = evolution_linearization_spectrum(&flat, 1.0, PerturbationClass::CoPeriodic, true).unwrap();
            let mut expect: Vec<f64> = lat
                .orbits()
                .iter()
                .skip(1)
                .map(|o| {
                    let (a, b) = o.representative;
                    dispersion(lat.dual_wavevector(a, b), 8.0, 1.0)
                })
                .collect();
            expect.sort_by(|a, b| b.total_cmp(a));
            for (x, y) in report.eigenvalues.iter().zip(&expect) {
                assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
            }
            assert_eq!(report.n_unstable, 0);
            assert!(report.eigenvalues[0].abs() < 1e-10);
            assert!(report.eigenvalues[1] < -1.0);
        }
    }

    #[test]
    fn full_flat_spectrum_counts_every_mode() {
        let lat = make_lattice(LatticeKind::Square, 1.0, 8).unwrap();
        let flat = StationaryState::flat(&lat, 6.0);
        let report = evolution_linearization_spectrum(&flat, 1.0, PerturbationClass::CoPeriodic, false).unwrap();
        assert_eq!(report.eigenvalues.len(), lat.num_retained_modes() - 1);
        assert_eq!(report.verdict(), StabilityVerdict::Stable);
    }

    #[test]
    fn subharmonic_flat_spectrum_sees_long_waves() {
        let lat = make_lattice(LatticeKind::Square, 1.0, 8).unwrap();
        let flat = StationaryState::flat(&lat, 6.0);
        let verdicts = classify_stability(&flat, 1.0).unwrap();
        assert_eq!(verdicts[0].1, StabilityVerdict::Stable);
        assert_eq!(verdicts[1].1, StabilityVerdict::Stable);
        // k0/2 lies in the unstable band (0, 1/sqrt(2)) at M = 6
        assert_eq!(verdicts[2].1, StabilityVerdict::Unstable);
    }

    #[test]
    fn symmetric_matrix_matches_finite_differences_of_rhs() {
        use crate::evolve::rhs;
        let lat = make_lattice(LatticeKind::Hexagon, 1.0, 16).unwrap();
        let v = SymmetricField::from_orbit_amplitudes(&lat, &[((1, 0), 0.04), ((2, 1), -0.015), ((2, 0), 0.01)]).unwrap();
        let state = StationaryState { v: v.clone(), m: 8.2, multiplier: 0.0 };
        let lin = linearization(&state, 1.0, PerturbationClass::CoPeriodic, &SpectrumOptions::symmetric()).unwrap();
        let mat = &lin.blocks[0];
        let eps = 1e-6;
        for (j, &o) in lin.orbit_ids.iter().enumerate().take(12) {
            let mut e = SymmetricField::zeros(&lat);
            e.coeffs_mut()[o] = 1.0;
            let plus = rhs(&(&v + &e.scaled(eps)), 8.2, 1.0).unwrap();
            let minus = rhs(&(&v - &e.scaled(eps)), 8.2, 1.0).unwrap();
            let fd = (&plus - &minus).scaled(0.5 / eps);
            let col_norm: f64 = lin.orbit_ids.iter().map(|&r| fd.coeffs()[r].powi(2)).sum::<f64>().sqrt();
            for (i, &r) in lin.orbit_ids.iter().enumerate() {
                assert!((mat[(i, j)] - fd.coeffs()[r]).abs() <= 1e-6 * col_norm.max(1.0));
            }
        }
    }

    #[test]
    fn sine_block_matches_finite_differences_of_rhs() {
        use crate::evolve::rhs;
        use crate::field::PeriodicField;
        let lat = make_lattice(LatticeKind::Square, 1.0, 8).unwrap();
        let v = SymmetricField::from_orbit_amplitudes(&lat, &[((1, 0), 0.05), ((1, 1), 0.02)]).unwrap();
        let state = StationaryState { v: v.clone(), m: 7.5, multiplier: 0.0 };
        let lin = linearization(&state, 1.0, PerturbationClass::CoPeriodic, &SpectrumOptions::full()).unwrap();
        let sin = &lin.blocks[1];
        let base = PeriodicField::from_symmetric(&v);
        let eps = 1e-6;
        for (j, &c) in lin.modes.iter().enumerate().take(6) {
            // eps * sin(c.x) = eps * (e^{icx} - e^{-icx}) / 2i
            let mut plus = base.clone();
            let mut minus = base.clone();
            let half = Complex64::new(0.0, -0.5 * eps);
            plus.set_coefficient(c, base.coefficient(c) + half);
            plus.set_coefficient((-c.0, -c.1), base.coefficient((-c.0, -c.1)) - half);
            minus.set_coefficient(c, base.coefficient(c) - half);
            minus.set_coefficient((-c.0, -c.1), base.coefficient((-c.0, -c.1)) + half);
            let rp: PeriodicField = rhs(&plus, 7.5, 1.0).unwrap();
            let rm: PeriodicField = rhs(&minus, 7.5, 1.0).unwrap();
            for (i, &r) in lin.modes.iter().enumerate() {
                // sine coefficient of the output is 2i times its gamma coefficient
                let d = (rp.coefficient(r) - rm.coefficient(r)) / (2.0 * eps);
                let sine = (Complex64::new(0.0, 2.0) * d).re;
                assert!((sin[(i, j)] - sine).abs() < 1e-6 * sin[(j, j)].abs().max(1.0));
            }
        }
    }
}
