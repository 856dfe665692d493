//! Time integration of the full thin-film equation
//!
//! ```text
//! ∂t h + ∇·(h³(∇Δh - g∇h) + M h²/(1+h)² ∇h) = 0,   h = 1 + v,
//! ```
//!
//! by a first-order IMEX scheme: the linear operator `-Δ² - cΔ` with
//! `c = max(0, M/4 - g)` is implicit, the remainder explicit. Fluxes are
//! formed on the oversampled grid and differentiated spectrally, so the
//! mean of `v` is conserved exactly.

use alloc::sync::Arc;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::field::{divergence_spectrum, gradient_of_table, synthesize_table, PeriodicField, SymmetricField};
use crate::lattice::Lattice;
use crate::linstab;
use crate::stationary::{ProblemParams, StationaryState, DEFAULT_GUARD};

/// Operations the time stepper needs from a spectral field.
pub trait EvolvingField: Clone {
    fn lattice(&self) -> &Arc<Lattice>;
    /// Full coefficient table zero-padded to the oversampled grid.
    fn fine_table(&self) -> Vec<Complex64>;
    /// Truncation (and, for symmetric fields, orbit averaging) of a
    /// normalized oversampled-grid spectrum.
    fn from_fine_spectrum(spectrum: &[Complex64], lat: &Arc<Lattice>) -> Self;
    /// Multiplies every mode by `symbol(|gamma|^2)`.
    fn apply_symbol(&self, symbol: &dyn Fn(f64) -> f64) -> Self;
    fn axpy(&mut self, a: f64, x: &Self);
    fn mean(&self) -> f64;
    fn set_mean(&mut self, value: f64);
    fn norm_l2(&self) -> f64;
    /// Minimum of the field on the oversampled grid.
    fn min_value(&self) -> f64;
}

impl EvolvingField for SymmetricField {
    fn lattice(&self) -> &Arc<Lattice> {
        SymmetricField::lattice(self)
    }
    fn fine_table(&self) -> Vec<Complex64> {
        self.spectral_table(SymmetricField::lattice(self).fine_size())
    }
    fn from_fine_spectrum(spectrum: &[Complex64], lat: &Arc<Lattice>) -> Self {
        SymmetricField::from_spectrum(spectrum, lat.fine_size(), lat)
    }
    fn apply_symbol(&self, symbol: &dyn Fn(f64) -> f64) -> Self {
        SymmetricField::apply_symbol(self, symbol)
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        SymmetricField::axpy(self, a, x)
    }
    fn mean(&self) -> f64 {
        SymmetricField::mean(self)
    }
    fn set_mean(&mut self, value: f64) {
        self.coeffs_mut()[0] = value;
    }
    fn norm_l2(&self) -> f64 {
        SymmetricField::norm_l2(self)
    }
    fn min_value(&self) -> f64 {
        self.fine_grid().min()
    }
}

impl EvolvingField for PeriodicField {
    fn lattice(&self) -> &Arc<Lattice> {
        PeriodicField::lattice(self)
    }
    fn fine_table(&self) -> Vec<Complex64> {
        self.spectral_table(PeriodicField::lattice(self).fine_size())
    }
    fn from_fine_spectrum(spectrum: &[Complex64], lat: &Arc<Lattice>) -> Self {
        PeriodicField::from_spectrum(spectrum, lat.fine_size(), lat)
    }
    fn apply_symbol(&self, symbol: &dyn Fn(f64) -> f64) -> Self {
        let lat = Arc::clone(PeriodicField::lattice(self));
        let n = lat.modes_per_dim();
        let mut out = self.clone();
        for (_, index) in lat.retained_modes() {
            out.coeffs_mut()[lat.wrap(index, n)] *= symbol(lat.wavenumber_sq(index));
        }
        out
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        PeriodicField::axpy(self, a, x)
    }
    fn mean(&self) -> f64 {
        PeriodicField::mean(self)
    }
    fn set_mean(&mut self, value: f64) {
        self.coeffs_mut()[0] = Complex64::new(value, 0.0);
    }
    fn norm_l2(&self) -> f64 {
        PeriodicField::norm_l2(self)
    }
    fn min_value(&self) -> f64 {
        self.fine_grid().min()
    }
}

/// Mobility `h³` and Marangoni mobility `h²/(1+h)²`.
fn mobilities(h: f64) -> (f64, f64) {
    let h2 = h * h;
    let q = 1.0 + h;
    (h2 * h, h2 / (q * q))
}

/// Normalized oversampled-grid spectrum of `-div(flux)`.
fn rhs_spectrum(lat: &Lattice, table: &[Complex64], m: f64, g: f64) -> Result<Vec<Complex64>> {
    let fine = lat.fine_size();
    let v = synthesize_table(lat, table.to_vec(), fine);
    let min_h = 1.0 + v.min();
    if !(min_h > 0.0) {
        return Err(Error::DomainViolation { min_height: min_h });
    }
    let mut lap = table.to_vec();
    for r in 0..fine {
        for c in 0..fine {
            let k = crate::field::table_wavevector(lat, r, c, fine);
            lap[r * fine + c] *= -(k[0] * k[0] + k[1] * k[1]);
        }
    }
    let [gx, gy] = gradient_of_table(lat, table, fine);
    let [lx, ly] = gradient_of_table(lat, &lap, fine);
    let mut fx = gx.clone();
    let mut fy = gy.clone();
    for i in 0..fine * fine {
        let (a, p) = mobilities(1.0 + v.values()[i]);
        let (dx, dy) = (gx.values()[i], gy.values()[i]);
        fx.values_mut()[i] = a * (lx.values()[i] - g * dx) + m * p * dx;
        fy.values_mut()[i] = a * (ly.values()[i] - g * dy) + m * p * dy;
    }
    let mut spectrum = divergence_spectrum(lat, &fx, &fy);
    for z in &mut spectrum {
        *z = -*z;
    }
    Ok(spectrum)
}

/// `∂t v = -∇·(h³(∇Δv - g∇v) + M h²/(1+h)² ∇v)` with the mean set to zero.
pub fn rhs<F: EvolvingField>(v: &F, m: f64, g: f64) -> Result<F> {
    let lat = v.lattice();
    let spectrum = rhs_spectrum(lat, &v.fine_table(), m, g)?;
    let mut out = F::from_fine_spectrum(&spectrum, lat);
    out.set_mean(0.0);
    Ok(out)
}

/// Implicit shift `c = max(0, M/4 - g)`.
pub fn implicit_shift(params: &ProblemParams) -> f64 {
    (params.m / 4.0 - params.g).max(0.0)
}

#[derive(Clone, Debug)]
pub struct EvolutionState<F: EvolvingField> {
    pub v: F,
    pub t: f64,
    pub params: ProblemParams,
    pub dt: f64,
    /// Steps fail once `min(1 + v) <= guard`.
    pub guard: f64,
}

impl<F: EvolvingField> EvolutionState<F> {
    pub fn new(v: F, params: ProblemParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("time step must be positive"));
        }
        let min_h = 1.0 + v.min_value();
        if !(min_h > DEFAULT_GUARD) {
            return Err(Error::DomainViolation { min_height: min_h });
        }
        Ok(Self {
            v,
            t: 0.0,
            params,
            dt,
            guard: DEFAULT_GUARD,
        })
    }

    pub fn mass(&self) -> f64 {
        self.v.mean()
    }

    /// One IMEX step of size `dt`.
    pub fn step(&self, dt: f64) -> Result<Self> {
        let ProblemParams { g, m } = self.params;
        let c = implicit_shift(&self.params);
        let implicit = move |k2: f64| -k2 * k2 + c * k2;
        let mut explicit = rhs(&self.v, m, g)?;
        explicit.axpy(-1.0, &self.v.apply_symbol(&implicit));
        let mut next = self.v.clone();
        next.axpy(dt, &explicit);
        let mut next = next.apply_symbol(&|k2| 1.0 / (1.0 - dt * implicit(k2)));
        // the implicit symbol vanishes at gamma = 0 and the rhs has zero mean
        next.set_mean(self.v.mean());
        let min_h = 1.0 + next.min_value();
        if !(min_h > self.guard) {
            return Err(Error::DomainViolation { min_height: min_h });
        }
        Ok(Self {
            v: next,
            t: self.t + dt,
            params: self.params,
            dt: self.dt,
            guard: self.guard,
        })
    }

    pub fn advance(&self) -> Result<Self> {
        self.step(self.dt)
    }

    /// Advances `steps` steps, calling `observe` after each one.
    pub fn run(&self, steps: usize, mut observe: impl FnMut(&Self)) -> Result<Self> {
        let mut state = self.clone();
        for _ in 0..steps {
            state = state.advance()?;
            observe(&state);
        }
        Ok(state)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NonlinearVerdict {
    Decays,
    Grows,
}

/// Perturbs `state` by `eps` (in L2) along the leading co-periodic symmetric
/// eigenvector and integrates up to time `t_max` with step `dt`; reports
/// whether the deviation shrinks or grows by a factor 10.
pub fn classify_nonlinear_stability(
    state: &StationaryState,
    g: f64,
    eps: f64,
    t_max: f64,
    dt: f64,
) -> Result<NonlinearVerdict> {
    let dir = linstab::leading_symmetric_eigenvector(state, g)?;
    let mut v0 = state.v.clone();
    v0.axpy(eps / dir.norm_l2(), &dir);
    let params = ProblemParams::new(g, state.m)?;
    let mut evo = EvolutionState::new(v0, params, dt)?;
    let d0 = eps;
    let steps = Float::ceil(t_max / dt) as usize;
    let mut ratio = 1.0;
    for _ in 0..steps {
        evo = match evo.advance() {
            Ok(next) => next,
            Err(Error::DomainViolation { .. }) => return Ok(NonlinearVerdict::Grows),
            Err(e) => return Err(e),
        };
        ratio = (&evo.v - &state.v).norm_l2() / d0;
        if ratio <= 0.1 {
            return Ok(NonlinearVerdict::Decays);
        }
        if ratio >= 10.0 || !ratio.is_finite() {
            return Ok(NonlinearVerdict::Grows);
        }
    }
    Err(Error::Inconclusive { ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_lattice, LatticeKind};
    use crate::linstab::dispersion;

    #[test]
    fn flat_state_is_stationary() {
        let lat = make_lattice(LatticeKind::Hexagon, 1.0, 16).unwrap();
        let z = SymmetricField::zeros(&lat);
        assert!(rhs(&z, 8.0, 1.0).unwrap().norm_l2() == 0.0);
        let evo = EvolutionState::new(z, ProblemParams::new(1.0, 8.0).unwrap(), 1e-2).unwrap();
        assert_eq!(evo.advance().unwrap().v.norm_l2(), 0.0);
    }

    #[test]
    fn linear_response_matches_dispersion() {
        let lat = make_lattice(LatticeKind::Square, 0.8, 16).unwrap();
        let eps = 1e-7;
        for (index, m) in [((1, 0), 8.5), ((2, 1), 5.0)] {
            let w = SymmetricField::from_orbit_amplitudes(&lat, &[(index, eps)]).unwrap();
            let r = rhs(&w, m, 1.0).unwrap();
            let k = lat.dual_wavevector(index.0, index.1);
            let expect = dispersion(k, m, 1.0);
            assert!((r.amplitude(index) / eps - expect).abs() < 1e-5 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn periodic_and_symmetric_rhs_agree() {
        let lat = make_lattice(LatticeKind::Hexagon, 1.0, 16).unwrap();
        let v = SymmetricField::from_orbit_amplitudes(&lat, &[((1, 0), 0.05), ((2, 1), 0.02)]).unwrap();
        let a = rhs(&v, 8.0, 1.0).unwrap();
        let b: PeriodicField = rhs(&PeriodicField::from_symmetric(&v), 8.0, 1.0).unwrap();
        assert!(b.symmetry_defect() < 1e-12);
        assert!(b.project_symmetric().max_abs_diff(&a) < 1e-13);
    }

    #[test]
    fn mass_is_conserved_per_step() {
        let lat = make_lattice(LatticeKind::Square, 1.0, 16).unwrap();
        let v = SymmetricField::from_orbit_amplitudes(&lat, &[((0, 0), 0.01), ((1, 0), 0.05), ((1, 1), -0.03)]).unwrap();
        let evo = EvolutionState::new(v, ProblemParams::new(1.0, 7.0).unwrap(), 1e-3).unwrap();
        let after = evo.run(50, |_| {}).unwrap();
        assert_eq!(after.mass(), evo.mass());
    }
}
