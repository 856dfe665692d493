//! Spectral fields on a symmetric lattice.
//!
//! [`SymmetricField`] stores one real amplitude per symmetry orbit; the full
//! Fourier table it stands for has `a_gamma = a_{S gamma}` for every group
//! element `S` and `a_gamma = conj(a_{-gamma})`. [`PeriodicField`] keeps the
//! full complex table and is used where symmetry is not enforced.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, ModeIndex};

/// Real values on an `m x m` grid of lattice coordinates, row-major in
/// `(j1, j2)`; node `(j1, j2)` sits at `j1/m a1 + j2/m a2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    size: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(Error::InvalidArgument("grid value count does not match size"));
        }
        Ok(Self { size, values })
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(size * size);
        for j1 in 0..size {
            for j2 in 0..size {
                values.push(f(j1, j2));
            }
        }
        Self { size, values }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, j1: usize, j2: usize) -> f64 {
        self.values[j1 * self.size + j2]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Cell average by the periodic trapezoidal rule.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            size: self.size,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Forward transform normalized so that entry `wrap(gamma)` holds the
    /// Fourier coefficient `a_gamma`.
    pub(crate) fn spectrum(&self, lat: &Lattice) -> Vec<Complex64> {
        let m = self.size;
        let mut table: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        lat.with_plan(m, |plan| plan.forward(&mut table));
        let scale = 1.0 / (m * m) as f64;
        for z in &mut table {
            *z *= scale;
        }
        table
    }
}

/// Inverse transform of a full coefficient table to real grid values.
pub(crate) fn synthesize_table(lat: &Lattice, mut table: Vec<Complex64>, m: usize) -> Grid {
    lat.with_plan(m, |plan| plan.inverse(&mut table));
    Grid {
        size: m,
        values: table.into_iter().map(|z| z.re).collect(),
    }
}

/// Cartesian wave vector of the slot `(r, c)` of an `m x m` table.
pub(crate) fn table_wavevector(lat: &Lattice, r: usize, c: usize, m: usize) -> [f64; 2] {
    let half = (m / 2) as i32;
    let unwrap = |j: usize| {
        let j = j as i32;
        if j >= half {
            j - m as i32
        } else {
            j
        }
    };
    lat.dual_wavevector(unwrap(r), unwrap(c))
}

/// Gradient grids of the function with full coefficient table `table`.
pub(crate) fn gradient_of_table(lat: &Lattice, table: &[Complex64], m: usize) -> [Grid; 2] {
    let mut tx = table.to_vec();
    let mut ty = table.to_vec();
    for r in 0..m {
        for c in 0..m {
            let k = table_wavevector(lat, r, c, m);
            let i = r * m + c;
            tx[i] *= Complex64::new(0.0, k[0]);
            ty[i] *= Complex64::new(0.0, k[1]);
        }
    }
    [synthesize_table(lat, tx, m), synthesize_table(lat, ty, m)]
}

/// Normalized spectrum of `div (fx, fy)` on the grid of the components.
pub(crate) fn divergence_spectrum(lat: &Lattice, fx: &Grid, fy: &Grid) -> Vec<Complex64> {
    let m = fx.size();
    let sx = fx.spectrum(lat);
    let sy = fy.spectrum(lat);
    let mut out = vec![Complex64::new(0.0, 0.0); m * m];
    for r in 0..m {
        for c in 0..m {
            let k = table_wavevector(lat, r, c, m);
            let i = r * m + c;
            out[i] = Complex64::new(0.0, 1.0) * (sx[i] * k[0] + sy[i] * k[1]);
        }
    }
    out
}

/// A real, dihedrally symmetric field stored as one coefficient per orbit.
#[derive(Clone, Debug)]
pub struct SymmetricField {
    lattice: Arc<Lattice>,
    coeffs: Vec<f64>,
}

impl PartialEq for SymmetricField {
    fn eq(&self, other: &Self) -> bool {
        self.lattice.same_as(&other.lattice) && self.coeffs == other.coeffs
    }
}

impl SymmetricField {
    pub fn zeros(lat: &Arc<Lattice>) -> Self {
        Self {
            lattice: Arc::clone(lat),
            coeffs: vec![0.0; lat.num_orbits()],
        }
    }

    pub fn constant(lat: &Arc<Lattice>, c: f64) -> Self {
        let mut f = Self::zeros(lat);
        f.coeffs[0] = c;
        f
    }

    pub fn from_coeffs(lat: &Arc<Lattice>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != lat.num_orbits() {
            return Err(Error::InvalidArgument("coefficient count does not match orbit count"));
        }
        Ok(Self {
            lattice: Arc::clone(lat),
            coeffs,
        })
    }

    /// Field with amplitude `a` on every member of the orbit of each listed
    /// index.
    pub fn from_orbit_amplitudes(lat: &Arc<Lattice>, modes: &[(ModeIndex, f64)]) -> Result<Self> {
        let mut f = Self::zeros(lat);
        for &(index, a) in modes {
            let id = lat
                .orbit_id(index)
                .ok_or(Error::InvalidArgument("mode outside the spectral truncation"))?;
            f.coeffs[id] = a;
        }
        Ok(f)
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient of the orbit containing `index` (zero if not retained).
    pub fn amplitude(&self, index: ModeIndex) -> f64 {
        self.lattice.orbit_id(index).map_or(0.0, |id| self.coeffs[id])
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn without_mean(mut self) -> Self {
        self.coeffs[0] = 0.0;
        self
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.lattice.same_as(&other.lattice) {
            Ok(())
        } else {
            Err(Error::LatticeMismatch)
        }
    }

    /// Full Fourier table, zero-padded to `m x m`.
    pub fn spectral_table(&self, m: usize) -> Vec<Complex64> {
        let mut table = vec![Complex64::new(0.0, 0.0); m * m];
        for (id, index) in self.lattice.retained_modes() {
            table[self.lattice.wrap(index, m)] = Complex64::new(self.coeffs[id], 0.0);
        }
        table
    }

    /// Grid values on the `N x N` periodicity grid.
    pub fn synthesize(&self) -> Grid {
        self.synthesize_on(self.lattice.modes_per_dim())
    }

    /// Grid values on an `m x m` grid (`m >= N`), exact for the truncated series.
    pub fn synthesize_on(&self, m: usize) -> Grid {
        assert!(m >= self.lattice.modes_per_dim(), "grid coarser than the truncation");
        synthesize_table(&self.lattice, self.spectral_table(m), m)
    }

    /// Values on the oversampled grid used for nonlinear terms.
    pub fn fine_grid(&self) -> Grid {
        self.synthesize_on(self.lattice.fine_size())
    }

    /// Projects grid values onto the symmetric truncated space by averaging
    /// the Fourier coefficients over each orbit.
    pub fn analyze(grid: &Grid, lat: &Arc<Lattice>) -> Self {
        let spectrum = grid.spectrum(lat);
        Self::from_spectrum(&spectrum, grid.size(), lat)
    }

    pub(crate) fn from_spectrum(spectrum: &[Complex64], m: usize, lat: &Arc<Lattice>) -> Self {
        let coeffs = lat
            .orbits()
            .iter()
            .map(|o| {
                let sum: f64 = o.members.iter().map(|&g| spectrum[lat.wrap(g, m)].re).sum();
                sum / o.len() as f64
            })
            .collect();
        Self {
            lattice: Arc::clone(lat),
            coeffs,
        }
    }

    /// Multiplies each orbit coefficient by `symbol(|gamma|^2)`.
    pub fn apply_symbol(&self, symbol: impl Fn(f64) -> f64) -> Self {
        let lat = &self.lattice;
        let coeffs = self
            .coeffs
            .iter()
            .zip(lat.orbits())
            .map(|(c, o)| c * symbol(lat.wavenumber_sq(o.representative)))
            .collect();
        Self {
            lattice: Arc::clone(lat),
            coeffs,
        }
    }

    pub fn laplacian(&self) -> Self {
        self.apply_symbol(|k2| -k2)
    }

    pub fn bilaplacian(&self) -> Self {
        self.apply_symbol(|k2| k2 * k2)
    }

    /// `cell_area * sum_gamma a_gamma b_gamma` over the unfolded table.
    pub fn inner_product_l2(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.weighted_sum(other, |_| 1.0))
    }

    fn weighted_sum(&self, other: &Self, weight: impl Fn(f64) -> f64) -> f64 {
        let lat = &self.lattice;
        let s: f64 = lat
            .orbits()
            .iter()
            .zip(self.coeffs.iter().zip(&other.coeffs))
            .map(|(o, (a, b))| o.len() as f64 * weight(lat.wavenumber_sq(o.representative)) * a * b)
            .sum();
        lat.cell_area() * s
    }

    pub fn norm_l2(&self) -> f64 {
        Float::sqrt(self.weighted_sum(self, |_| 1.0))
    }

    /// H^2 norm with weight `cell_area * (1 + |gamma|^2 + |gamma|^4)`.
    pub fn norm_x(&self) -> f64 {
        Float::sqrt(self.weighted_sum(self, |k2| 1.0 + k2 + k2 * k2))
    }

    /// Applies `phi` pointwise on the oversampled grid and projects back.
    ///
    /// Fails with [`Error::DomainViolation`] if `phi` produces a non-finite
    /// value; the reported height is `min(1 + f)` on the oversampled grid.
    pub fn nonlinear_pointwise(&self, phi: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = self.fine_grid();
        let mapped = grid.map(phi);
        if mapped.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::DomainViolation {
                min_height: 1.0 + grid.min(),
            });
        }
        Ok(Self::analyze(&mapped, &self.lattice))
    }

    /// Pointwise product, exact whenever the product stays inside the
    /// truncation (the oversampled grid resolves all quadratic terms).
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut a = self.fine_grid();
        let b = other.fine_grid();
        for (x, y) in a.values_mut().iter_mut().zip(b.values()) {
            *x *= y;
        }
        Ok(Self::analyze(&a, &self.lattice))
    }

    /// Cartesian gradient components on an `m x m` grid.
    pub fn gradient_grids(&self, m: usize) -> [Grid; 2] {
        gradient_of_table(&self.lattice, &self.spectral_table(m), m)
    }

    /// Symmetric projection of the divergence of a vector field given by
    /// its Cartesian components on an `m x m` grid.
    pub fn divergence(fx: &Grid, fy: &Grid, lat: &Arc<Lattice>) -> Self {
        let m = fx.size();
        let spectrum = divergence_spectrum(lat, fx, fy);
        Self::from_spectrum(&spectrum, m, lat)
    }

    /// Point evaluation of the truncated cosine series.
    pub fn value_at(&self, x: [f64; 2]) -> f64 {
        let lat = &self.lattice;
        let mut acc = 0.0;
        for (id, index) in lat.retained_modes() {
            let c = self.coeffs[id];
            if c != 0.0 {
                let g = lat.dual_wavevector(index.0, index.1);
                acc += c * Float::cos(g[0] * x[0] + g[1] * x[1]);
            }
        }
        acc
    }

    pub fn gradient_at(&self, x: [f64; 2]) -> [f64; 2] {
        let lat = &self.lattice;
        let mut acc = [0.0, 0.0];
        for (id, index) in lat.retained_modes() {
            let c = self.coeffs[id];
            if c != 0.0 {
                let g = lat.dual_wavevector(index.0, index.1);
                let s = Float::sin(g[0] * x[0] + g[1] * x[1]);
                acc[0] -= c * g[0] * s;
                acc[1] -= c * g[1] * s;
            }
        }
        acc
    }

    /// Moves the coefficient of mode `gamma` to mode `factor * gamma` of
    /// `target`. With `target.k0 = k0 / factor` this is the same function
    /// on a cell `factor` times larger.
    pub fn embed(&self, target: &Arc<Lattice>, factor: i32) -> Result<Self> {
        if target.kind() != self.lattice.kind() || factor < 1 {
            return Err(Error::LatticeMismatch);
        }
        let mut out = Self::zeros(target);
        for (c, o) in self.coeffs.iter().zip(self.lattice.orbits()) {
            if *c == 0.0 {
                continue;
            }
            let (a, b) = o.representative;
            let id = target
                .orbit_id((a * factor, b * factor))
                .ok_or(Error::InvalidArgument("embedded mode outside the target truncation"))?;
            out.coeffs[id] = *c;
        }
        Ok(out)
    }

    /// Copies the coefficients onto another truncation of the same lattice,
    /// dropping orbits that are not retained there.
    pub fn resample(&self, target: &Arc<Lattice>) -> Result<Self> {
        if target.kind() != self.lattice.kind() || target.k0() != self.lattice.k0() {
            return Err(Error::LatticeMismatch);
        }
        let mut out = Self::zeros(target);
        for (c, o) in self.coeffs.iter().zip(self.lattice.orbits()) {
            if let Some(id) = target.orbit_id(o.representative) {
                out.coeffs[id] = *c;
            }
        }
        Ok(out)
    }

    /// L2 energy carried by each orbit, `cell_area * |o| * a_o^2`.
    pub fn orbit_energies(&self) -> Vec<f64> {
        let area = self.lattice.cell_area();
        self.coeffs
            .iter()
            .zip(self.lattice.orbits())
            .map(|(c, o)| area * o.len() as f64 * c * c)
            .collect()
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        assert!(self.lattice.same_as(&x.lattice), "fields live on different lattices");
        for (y, xi) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *y += a * xi;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            lattice: Arc::clone(&self.lattice),
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| Float::abs(a - b))
            .fold(0.0, f64::max)
    }
}

macro_rules! impl_binop {
    ($tr:ident, $method:ident, $op:tt) => {
        impl $tr<&SymmetricField> for &SymmetricField {
            type Output = SymmetricField;
            fn $method(self, rhs: &SymmetricField) -> SymmetricField {
                assert!(self.lattice.same_as(&rhs.lattice), "fields live on different lattices");
                SymmetricField {
                    lattice: Arc::clone(&self.lattice),
                    coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a $op b).collect(),
                }
            }
        }
        impl $tr<SymmetricField> for SymmetricField {
            type Output = SymmetricField;
            fn $method(self, rhs: SymmetricField) -> SymmetricField {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&SymmetricField> for SymmetricField {
            type Output = SymmetricField;
            fn $method(self, rhs: &SymmetricField) -> SymmetricField {
                (&self).$method(rhs)
            }
        }
    };
}

impl_binop!(Add, add, +);
impl_binop!(Sub, sub, -);

impl AddAssign<&SymmetricField> for SymmetricField {
    fn add_assign(&mut self, rhs: &SymmetricField) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&SymmetricField> for SymmetricField {
    fn sub_assign(&mut self, rhs: &SymmetricField) {
        self.axpy(-1.0, rhs);
    }
}

impl Mul<&SymmetricField> for f64 {
    type Output = SymmetricField;
    fn mul(self, rhs: &SymmetricField) -> SymmetricField {
        rhs.scaled(self)
    }
}

impl Mul<SymmetricField> for f64 {
    type Output = SymmetricField;
    fn mul(self, rhs: SymmetricField) -> SymmetricField {
        rhs.scaled(self)
    }
}

impl Neg for &SymmetricField {
    type Output = SymmetricField;
    fn neg(self) -> SymmetricField {
        self.scaled(-1.0)
    }
}

impl Neg for SymmetricField {
    type Output = SymmetricField;
    fn neg(self) -> SymmetricField {
        self.scaled(-1.0)
    }
}

/// A real periodic field without symmetry constraints, stored as the full
/// `N x N` Fourier table (zero outside the retained modes).
#[derive(Clone, Debug)]
pub struct PeriodicField {
    lattice: Arc<Lattice>,
    coeffs: Vec<Complex64>,
}

impl PeriodicField {
    pub fn zeros(lat: &Arc<Lattice>) -> Self {
        let n = lat.modes_per_dim();
        Self {
            lattice: Arc::clone(lat),
            coeffs: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn from_symmetric(f: &SymmetricField) -> Self {
        let n = f.lattice.modes_per_dim();
        Self {
            lattice: Arc::clone(&f.lattice),
            coeffs: f.spectral_table(n),
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    /// Coefficient of mode `index` (zero if not retained).
    pub fn coefficient(&self, index: ModeIndex) -> Complex64 {
        if self.lattice.orbit_id(index).is_none() {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[self.lattice.wrap(index, self.lattice.modes_per_dim())]
    }

    pub fn set_coefficient(&mut self, index: ModeIndex, value: Complex64) {
        let n = self.lattice.modes_per_dim();
        if self.lattice.orbit_id(index).is_some() {
            self.coeffs[self.lattice.wrap(index, n)] = value;
        }
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Full table on an `m x m` grid.
    pub fn spectral_table(&self, m: usize) -> Vec<Complex64> {
        let n = self.lattice.modes_per_dim();
        let mut table = vec![Complex64::new(0.0, 0.0); m * m];
        for (_, index) in self.lattice.retained_modes() {
            table[self.lattice.wrap(index, m)] = self.coeffs[self.lattice.wrap(index, n)];
        }
        table
    }

    pub fn synthesize_on(&self, m: usize) -> Grid {
        synthesize_table(&self.lattice, self.spectral_table(m), m)
    }

    pub fn synthesize(&self) -> Grid {
        self.synthesize_on(self.lattice.modes_per_dim())
    }

    pub fn fine_grid(&self) -> Grid {
        self.synthesize_on(self.lattice.fine_size())
    }

    pub fn gradient_grids(&self, m: usize) -> [Grid; 2] {
        gradient_of_table(&self.lattice, &self.spectral_table(m), m)
    }

    /// Truncated divergence of a vector field given on an `m x m` grid.
    pub fn divergence(fx: &Grid, fy: &Grid, lat: &Arc<Lattice>) -> Self {
        let spectrum = divergence_spectrum(lat, fx, fy);
        Self::from_spectrum(&spectrum, fx.size(), lat)
    }

    pub fn laplacian(&self) -> Self {
        let lat = Arc::clone(&self.lattice);
        let n = lat.modes_per_dim();
        let mut out = self.clone();
        for (_, index) in lat.retained_modes() {
            out.coeffs[lat.wrap(index, n)] *= -lat.wavenumber_sq(index);
        }
        out
    }

    /// Truncates grid values to the retained modes.
    pub fn analyze(grid: &Grid, lat: &Arc<Lattice>) -> Self {
        let spectrum = grid.spectrum(lat);
        Self::from_spectrum(&spectrum, grid.size(), lat)
    }

    pub(crate) fn from_spectrum(spectrum: &[Complex64], m: usize, lat: &Arc<Lattice>) -> Self {
        let mut out = Self::zeros(lat);
        let n = lat.modes_per_dim();
        for (_, index) in lat.retained_modes() {
            out.coeffs[lat.wrap(index, n)] = spectrum[lat.wrap(index, m)];
        }
        out.enforce_reality();
        out
    }

    /// Imposes `a_{-gamma} = conj(a_gamma)` exactly.
    fn enforce_reality(&mut self) {
        let lat = Arc::clone(&self.lattice);
        let n = lat.modes_per_dim();
        for (_, index) in lat.retained_modes() {
            let mirror = (-index.0, -index.1);
            if index > mirror {
                continue;
            }
            let a = self.coeffs[lat.wrap(index, n)];
            let b = self.coeffs[lat.wrap(mirror, n)].conj();
            let avg = 0.5 * (a + b);
            self.coeffs[lat.wrap(index, n)] = avg;
            self.coeffs[lat.wrap(mirror, n)] = avg.conj();
        }
    }

    /// Orbit-averaged symmetric part.
    pub fn project_symmetric(&self) -> SymmetricField {
        let lat = &self.lattice;
        let n = lat.modes_per_dim();
        let coeffs = lat
            .orbits()
            .iter()
            .map(|o| {
                let s: f64 = o.members.iter().map(|&g| self.coeffs[lat.wrap(g, n)].re).sum();
                s / o.len() as f64
            })
            .collect();
        SymmetricField {
            lattice: Arc::clone(lat),
            coeffs,
        }
    }

    /// Largest deviation of a coefficient from its orbit average.
    pub fn symmetry_defect(&self) -> f64 {
        let sym = self.project_symmetric();
        let lat = &self.lattice;
        let n = lat.modes_per_dim();
        lat.retained_modes()
            .map(|(id, g)| (self.coeffs[lat.wrap(g, n)] - Complex64::new(sym.coeffs[id], 0.0)).norm())
            .fold(0.0, f64::max)
    }

    pub fn inner_product_l2(&self, other: &Self) -> Result<f64> {
        if !self.lattice.same_as(&other.lattice) {
            return Err(Error::LatticeMismatch);
        }
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        Ok(self.lattice.cell_area() * s)
    }

    pub fn norm_l2(&self) -> f64 {
        let s: f64 = self.coeffs.iter().map(|a| a.norm_sqr()).sum();
        Float::sqrt(self.lattice.cell_area() * s)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        assert!(self.lattice.same_as(&x.lattice), "fields live on different lattices");
        for (y, xi) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *y += xi * a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_lattice, LatticeKind};
    use core::f64::consts::PI;

    fn xi0(lat: &Arc<Lattice>) -> SymmetricField {
        SymmetricField::from_orbit_amplitudes(lat, &[((1, 0), 1.0)]).unwrap()
    }

    #[test]
    fn zero_field_synthesizes_to_zero() {
        let lat = make_lattice(LatticeKind::Square, 1.0, 16).unwrap();
        assert!(SymmetricField::zeros(&lat).synthesize().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn square_kernel_is_sum_of_cosines() {
        let lat = make_lattice(LatticeKind::Square, 1.0, 16).unwrap();
        let grid = xi0(&lat).synthesize();
        for j1 in 0..16 {
            for j2 in 0..16 {
                let x = lat.grid_point(j1, j2, 16);
                let expect = 2.0 * x[0].cos() + 2.0 * x[1].cos();
                assert!((grid.get(j1, j2) - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn hexagon_kernel_at_origin() {
        let lat = make_lattice(LatticeKind::Hexagon, 1.0, 16).unwrap();
        let psi = xi0(&lat);
        assert!((psi.synthesize().get(0, 0) - 6.0).abs() < 1e-13);
        assert!((psi.value_at([0.0, 0.0]) - 6.0).abs() < 1e-13);
    }

    #[test]
    fn analyze_single_cosine_projects_onto_orbit() {
        let lat = make_lattice(LatticeKind::Square, 1.0, 16).unwrap();
        let grid = Grid::from_fn(16, |j1, j2| lat.grid_point(j1, j2, 16)[0].cos());
        let f = SymmetricField::analyze(&grid, &lat);
        // cos(x) has coefficients {1/2, 1/2, 0, 0} on the orbit of (1, 0)
        assert!((f.amplitude((1, 0)) - 0.25).abs() < 1e-14);
        let c = SymmetricField::analyze(&Grid::from_fn(16, |_, _| 3.5), &lat);
        assert!((c.mean() - 3.5).abs() < 1e-14);
        assert!(c.coeffs()[1..].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn laplacian_multipliers() {
        let lat = make_lattice(LatticeKind::Square, 1.3, 16).unwrap();
        let xi = xi0(&lat);
        let lap = xi.laplacian();
        assert!(lap.max_abs_diff(&xi.scaled(-1.69)) < 1e-14);
        assert!(SymmetricField::constant(&lat, 2.0).laplacian().coeffs().iter().all(|&c| c == 0.0));
        let hex = make_lattice(LatticeKind::Hexagon, 1.0, 16).unwrap();
        let f = SymmetricField::from_orbit_amplitudes(&hex, &[((2, 1), 1.0)]).unwrap();
        assert!((f.laplacian().amplitude((2, 1)) + 3.0).abs() < 1e-14);
    }

    #[test]
    fn x_norms_of_kernels() {
        for k0 in [0.5, 1.0, 2.0] {
            let sq = make_lattice(LatticeKind::Square, k0, 16).unwrap();
            let expect = 4.0 * PI / k0 * (1.0 + k0 * k0 + k0.powi(4)).sqrt();
            assert!((xi0(&sq).norm_x() - expect).abs() < 1e-12 * expect);
            let hex = make_lattice(LatticeKind::Hexagon, k0, 16).unwrap();
            let expect = 4.0 * 3f64.powf(0.25) * PI * (k0 * k0 + 1.0 + 1.0 / (k0 * k0)).sqrt();
            assert!((xi0(&hex).norm_x() - expect).abs() < 1e-12 * expect);
            assert_eq!(SymmetricField::zeros(&hex).norm_x(), 0.0);
        }
    }

    #[test]
    fn nonlinear_identity_and_constant() {
        let lat = make_lattice(LatticeKind::Hexagon, 1.0, 16).unwrap();
        let f = xi0(&lat).scaled(0.1);
        let g = f.nonlinear_pointwise(|v| v).unwrap();
        assert!(g.max_abs_diff(&f) < 1e-15);
        let z = SymmetricField::zeros(&lat)
            .nonlinear_pointwise(|v| 1.0 / (2.0 + v) + ((1.0 + v) / (2.0 + v)).ln())
            .unwrap();
        assert!((z.mean() - (0.5 - 2f64.ln())).abs() < 1e-15);
        let bad = xi0(&lat).scaled(0.5);
        assert!(matches!(
            bad.nonlinear_pointwise(|v| (1.0 + v).ln()),
            Err(Error::DomainViolation { .. })
        ));
    }

    #[test]
    fn embedding_preserves_values() {
        let lat = make_lattice(LatticeKind::Square, 1.0, 16).unwrap();
        let big = make_lattice(LatticeKind::Square, 0.5, 32).unwrap();
        let f = xi0(&lat).scaled(0.3) + SymmetricField::from_orbit_amplitudes(&lat, &[((2, 1), 0.1)]).unwrap();
        let e = f.embed(&big, 2).unwrap();
        for x in [[0.3, 0.7], [1.9, -2.2]] {
            assert!((e.value_at(x) - f.value_at(x)).abs() < 1e-13);
        }
        assert!((e.norm_l2() / f.norm_l2() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn periodic_field_round_trip() {
        let lat = make_lattice(LatticeKind::Hexagon, 1.0, 16).unwrap();
        let f = xi0(&lat).scaled(0.2) + SymmetricField::from_orbit_amplitudes(&lat, &[((2, 1), 0.05)]).unwrap();
        let p = PeriodicField::from_symmetric(&f);
        assert!(p.symmetry_defect() < 1e-15);
        let back = PeriodicField::analyze(&p.fine_grid(), &lat).project_symmetric();
        assert!(back.max_abs_diff(&f) < 1e-14);
        assert!((p.norm_l2() - f.norm_l2()).abs() < 1e-12);
    }
}
