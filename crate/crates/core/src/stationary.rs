//! The nonlocal second-order stationary problem
//!
//! ```text
//! F(v, M) = Δv - g v + M f(v) - M K(v),   f(v) = 1/(2+v) + log((1+v)/(2+v)),
//! ```
//!
//! with `K(v)` the cell average of `f(v)`, and a damped bordered Newton
//! solver that carries the multiplier `λ = M K(v)` as an extra unknown.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SymmetricField;
use crate::lattice::Lattice;
use crate::linalg;

/// Admissibility margin: iterates keep `min(1 + v) >= DEFAULT_GUARD`.
pub const DEFAULT_GUARD: f64 = 1e-3;
/// Newton tolerance on the L2 norm of the residual.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Largest modes-per-dimension for which Newton uses a dense factorization.
pub const DENSE_LIMIT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub g: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

impl ProblemParams {
    pub fn new(g: f64, m: f64) -> Result<Self> {
        if !(g > 0.0) || !g.is_finite() || !m.is_finite() {
            return Err(Error::InvalidArgument("g must be positive and M finite"));
        }
        Ok(Self { g, m })
    }

    /// Onset of the long-wave instability, `4 g`.
    pub fn critical(&self) -> f64 {
        4.0 * self.g
    }

    /// Bifurcation value for wave number `k0`, `4 g + 4 k0^2`.
    pub fn critical_at(&self, k0: f64) -> f64 {
        4.0 * self.g + 4.0 * k0 * k0
    }
}

/// The scalar nonlinearity `1/(2+v) + log((1+v)/(2+v))`.
pub fn nonlinearity(v: f64) -> f64 {
    1.0 / (2.0 + v) + Float::ln((1.0 + v) / (2.0 + v))
}

/// Its derivative `1/((1+v)(2+v)^2)`.
pub fn nonlinearity_derivative(v: f64) -> f64 {
    let t = 2.0 + v;
    1.0 / ((1.0 + v) * t * t)
}

/// A converged stationary state.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryState {
    pub v: SymmetricField,
    pub m: f64,
    /// Lagrange value standing in for `M K(v)`.
    pub multiplier: f64,
}

impl StationaryState {
    pub fn flat(lat: &Arc<Lattice>, m: f64) -> Self {
        Self {
            v: SymmetricField::zeros(lat),
            m,
            multiplier: m * (0.5 - Float::ln(2.0)),
        }
    }
}

/// `1 + min v` on the oversampled grid.
pub fn min_height(v: &SymmetricField) -> f64 {
    1.0 + v.fine_grid().min()
}

fn check_admissible(v: &SymmetricField) -> Result<()> {
    let h = min_height(v);
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::DomainViolation { min_height: h })
    }
}

/// `f(v)` projected onto the symmetric truncation.
pub fn nonlinearity_field(v: &SymmetricField) -> Result<SymmetricField> {
    check_admissible(v)?;
    v.nonlinear_pointwise(nonlinearity)
}

/// Cell average of `f(v)`.
pub fn constraint_k(v: &SymmetricField) -> Result<f64> {
    Ok(nonlinearity_field(v)?.mean())
}

/// `G(v) = Δv - g v + M f(v)` together with `f(v)`; `F = G - mean(G)` for
/// mean-zero `v`.
pub fn stationary_map(v: &SymmetricField, m: f64, g: f64) -> Result<(SymmetricField, SymmetricField)> {
    let f = nonlinearity_field(v)?;
    let mut out = v.laplacian();
    out.axpy(-g, v);
    out.axpy(m, &f);
    Ok((out, f))
}

/// `F(v, M) = Δv - g v + M f(v) - M K(v)`.
pub fn residual(v: &SymmetricField, m: f64, g: f64) -> Result<SymmetricField> {
    let (mut out, _) = stationary_map(v, m, g)?;
    out.coeffs_mut()[0] = -g * v.mean();
    Ok(out)
}

/// `∂_v F(v, M) w = Δw + (M q - g) w - avg(M q w)` with `q = f'(v)`.
pub fn jacobian_apply(v: &SymmetricField, m: f64, g: f64, w: &SymmetricField) -> Result<SymmetricField> {
    if !v.lattice().same_as(w.lattice()) {
        return Err(Error::LatticeMismatch);
    }
    check_admissible(v)?;
    let lat = v.lattice();
    let q = v.fine_grid().map(nonlinearity_derivative);
    let wg = w.fine_grid();
    let mut prod = q;
    for (p, wi) in prod.values_mut().iter_mut().zip(wg.values()) {
        *p *= wi;
    }
    let qw = SymmetricField::analyze(&prod, lat);
    let mut out = w.laplacian();
    out.axpy(-g, w);
    out.axpy(m, &qw);
    out.coeffs_mut()[0] = -g * w.mean();
    Ok(out)
}

/// Normalized 2N-grid spectrum of `phi(v)`.
pub(crate) fn pointwise_spectrum(v: &SymmetricField, phi: impl Fn(f64) -> f64) -> Result<Vec<Complex64>> {
    check_admissible(v)?;
    let grid = v.fine_grid().map(phi);
    if grid.values().iter().any(|x| !x.is_finite()) {
        return Err(Error::DomainViolation { min_height: min_height(v) });
    }
    Ok(grid.spectrum(v.lattice()))
}

/// Dense matrix of `∂_c G` in the orbit basis (all orbits including the
/// mean): entry `(o, o')` is the derivative of coefficient `o` of
/// `Δv - g v + M f(v)` with respect to coefficient `o'` of `v`.
pub fn jacobian_matrix(v: &SymmetricField, m: f64, g: f64) -> Result<DMatrix<f64>> {
    let lat = v.lattice();
    let fine = lat.fine_size();
    let qhat = pointwise_spectrum(v, nonlinearity_derivative)?;
    let n = lat.num_orbits();
    let mut jac = DMatrix::zeros(n, n);
    for (o, orbit) in lat.orbits().iter().enumerate() {
        let (r1, r2) = orbit.representative;
        jac[(o, o)] -= lat.wavenumber_sq(orbit.representative) + g;
        for (o2, (a, b)) in lat.retained_modes() {
            jac[(o, o2)] += m * qhat[lat.wrap((r1 - a, r2 - b), fine)].re;
        }
    }
    Ok(jac)
}

/// The Jacobian of `F` on the mean-zero subspace in the symmetric scaling
/// `D^{1/2} J D^{-1/2}` with `D = diag(|o|)`; its eigenvalues are those of
/// `∂_v F` restricted to symmetric mean-zero fields.
pub fn symmetric_reduced_jacobian(v: &SymmetricField, m: f64, g: f64) -> Result<DMatrix<f64>> {
    let full = jacobian_matrix(v, m, g)?;
    Ok(symmetrize_reduced(v.lattice(), &full))
}

pub(crate) fn symmetrize_reduced(lat: &Lattice, full: &DMatrix<f64>) -> DMatrix<f64> {
    let n = lat.num_orbits() - 1;
    let sizes: Vec<f64> = lat.orbits().iter().skip(1).map(|o| o.len() as f64).collect();
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let x = Float::sqrt(sizes[i] / sizes[j]) * full[(i + 1, j + 1)];
            let y = Float::sqrt(sizes[j] / sizes[i]) * full[(j + 1, i + 1)];
            let s = 0.5 * (x + y);
            b[(i, j)] = s;
            b[(j, i)] = s;
        }
    }
    b
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub guard: f64,
    pub max_halvings: usize,
    /// Dense factorization up to this many modes per dimension, MINRES above.
    pub dense_limit: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: 30,
            guard: DEFAULT_GUARD,
            max_halvings: 30,
            dense_limit: DENSE_LIMIT,
        }
    }
}

/// Newton's method for `F(v, M) = 0` at fixed `M` with default options.
pub fn newton_solve(guess: &SymmetricField, m: f64, g: f64, tol: f64, max_iter: usize) -> Result<StationaryState> {
    let opts = NewtonOptions {
        tol,
        max_iter,
        ..NewtonOptions::default()
    };
    newton_solve_with(guess, m, g, &opts)
}

/// Newton's method for `F(v, M) = 0` at fixed `M`.
///
/// The linear system is the bordered one `[J_G, -e0; e0^T, 0]` in the
/// unknowns `(δc, δλ)`. Steps are halved while an iterate would violate
/// `min(1 + v) >= guard` or fail to reduce the residual.
pub fn newton_solve_with(guess: &SymmetricField, m: f64, g: f64, opts: &NewtonOptions) -> Result<StationaryState> {
    let mut v = guess.clone().without_mean();
    if min_height(&v) < opts.guard {
        return Err(Error::DomainViolation {
            min_height: min_height(&v),
        });
    }
    let mut res = residual(&v, m, g)?;
    let mut norm = res.norm_l2();
    for _ in 0..opts.max_iter {
        if norm <= opts.tol {
            break;
        }
        let dv = newton_direction(&v, m, g, &res, opts)?;
        let mut t = 1.0;
        let mut accepted = None;
        let mut admissible_seen = false;
        for _ in 0..=opts.max_halvings {
            let mut trial = v.clone();
            trial.axpy(t, &dv);
            if min_height(&trial) >= opts.guard {
                admissible_seen = true;
                if let Ok(r) = residual(&trial, m, g) {
                    let n = r.norm_l2();
                    if n.is_finite() && n < norm {
                        accepted = Some((trial, r, n));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, r, n)) => {
                v = trial;
                res = r;
                norm = n;
            }
            None if !admissible_seen => {
                return Err(Error::DomainViolation {
                    min_height: min_height(&v),
                })
            }
            None => break,
        }
    }
    if !(norm <= opts.tol) {
        return Err(Error::NoConvergence {
            iterations: opts.max_iter,
            residual: norm,
        });
    }
    let k = constraint_k(&v)?;
    Ok(StationaryState {
        multiplier: m * k,
        v,
        m,
    })
}

fn newton_direction(
    v: &SymmetricField,
    m: f64,
    g: f64,
    res: &SymmetricField,
    opts: &NewtonOptions,
) -> Result<SymmetricField> {
    let lat = v.lattice();
    if lat.modes_per_dim() <= opts.dense_limit {
        let jac = jacobian_matrix(v, m, g)?;
        let n = jac.nrows();
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n)).copy_from(&jac);
        a[(0, n)] = -1.0;
        a[(n, 0)] = 1.0;
        // residual of the bordered equations at the current multiplier is
        // F itself once the multiplier absorbs mean(G)
        let mut rhs = DVector::zeros(n + 1);
        for (i, c) in res.coeffs().iter().enumerate() {
            rhs[i] = -c;
        }
        rhs[0] = 0.0;
        rhs[n] = -v.mean();
        let sol = linalg::lu_solve(a, &rhs)?;
        SymmetricField::from_coeffs(lat, sol.as_slice()[..n].to_vec())
    } else {
        iterative_direction(v, m, g, res)
    }
}

/// MINRES on the mean-zero block in the symmetric scaling, matrix-free.
fn iterative_direction(v: &SymmetricField, m: f64, g: f64, res: &SymmetricField) -> Result<SymmetricField> {
    let lat = Arc::clone(v.lattice());
    let n = lat.num_orbits() - 1;
    let sqrt_size: Vec<f64> = lat.orbits().iter().skip(1).map(|o| Float::sqrt(o.len() as f64)).collect();
    let qbar = pointwise_spectrum(v, nonlinearity_derivative)?[0].re;
    let precond: Vec<f64> = lat
        .orbits()
        .iter()
        .skip(1)
        .map(|o| 1.0 / Float::abs(-lat.wavenumber_sq(o.representative) - g + m * qbar).max(1e-3))
        .collect();
    let b: Vec<f64> = (0..n).map(|i| -res.coeffs()[i + 1] * sqrt_size[i]).collect();
    let mut failure = None;
    let sol = linalg::minres(
        |x, out| {
            let mut w = vec![0.0; n + 1];
            for i in 0..n {
                w[i + 1] = x[i] / sqrt_size[i];
            }
            let w = SymmetricField::from_coeffs(&lat, w).expect("sized by orbit count");
            match jacobian_apply(v, m, g, &w) {
                Ok(jw) => {
                    for i in 0..n {
                        out[i] = jw.coeffs()[i + 1] * sqrt_size[i];
                    }
                }
                Err(e) => {
                    failure = Some(e);
                    out.iter_mut().for_each(|o| *o = 0.0);
                }
            }
        },
        &precond,
        &b,
        1e-13,
        20 * n + 200,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut coeffs = vec![0.0; n + 1];
    for i in 0..n {
        coeffs[i + 1] = sol[i] / sqrt_size[i];
    }
    SymmetricField::from_coeffs(&lat, coeffs)
}

/// Constant `C` of the a-priori bound
/// `‖v‖_X <= C (g ‖v‖_L2 + M (1 + ‖log(1+v)‖_L2 + ‖1+v‖_L2))`
/// for mean-zero solutions: `sqrt(1 + k0^-2 + k0^-4) * max(1, |Ω|^{1/2})`.
pub fn regularity_constant(lat: &Lattice) -> f64 {
    let k2 = lat.k0() * lat.k0();
    Float::sqrt(1.0 + 1.0 / k2 + 1.0 / (k2 * k2)) * Float::sqrt(lat.cell_area()).max(1.0)
}

/// Left side and the bracket on the right side of the regularity bound.
pub fn regularity_terms(v: &SymmetricField, m: f64, g: f64) -> Result<(f64, f64)> {
    check_admissible(v)?;
    let log = v.nonlinear_pointwise(|x| Float::ln(1.0 + x))?;
    let one_plus = SymmetricField::constant(v.lattice(), 1.0) + v;
    let bracket = g * v.norm_l2() + Float::abs(m) * (1.0 + log.norm_l2() + one_plus.norm_l2());
    Ok((v.norm_x(), bracket))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_lattice, LatticeKind};

    fn kernel(lat: &Arc<Lattice>) -> SymmetricField {
        let xi = SymmetricField::from_orbit_amplitudes(lat, &[((1, 0), 1.0)]).unwrap();
        let n = xi.norm_x();
        xi.scaled(1.0 / n)
    }

    #[test]
    fn derivative_values_at_zero() {
        assert!((nonlinearity(0.0) - (0.5 - 2f64.ln())).abs() < 1e-16);
        assert!((nonlinearity_derivative(0.0) - 0.25).abs() < 1e-16);
        let h = 1e-5;
        for v in [-0.5, 0.0, 0.7] {
            let fd = (nonlinearity(v + h) - nonlinearity(v - h)) / (2.0 * h);
            assert!((fd - nonlinearity_derivative(v)).abs() < 1e-9);
        }
    }

    #[test]
    fn constraint_of_constants() {
        let lat = make_lattice(LatticeKind::Square, 1.0, 16).unwrap();
        assert!((constraint_k(&SymmetricField::zeros(&lat)).unwrap() + 0.1931471805599453).abs() < 1e-15);
        let c = -0.4;
        let k = constraint_k(&SymmetricField::constant(&lat, c)).unwrap();
        assert!((k - nonlinearity(c)).abs() < 1e-14);
        assert!(matches!(
            constraint_k(&SymmetricField::constant(&lat, -1.5)),
            Err(Error::DomainViolation { .. })
        ));
    }

    #[test]
    fn flat_state_is_a_root() {
        let lat = make_lattice(LatticeKind::Hexagon, 1.0, 16).unwrap();
        for m in [0.0, 3.0, 8.0, 20.0] {
            let r = residual(&SymmetricField::zeros(&lat), m, 1.0).unwrap();
            assert!(r.norm_l2() < 1e-14);
        }
    }

    #[test]
    fn kernel_lies_in_jacobian_nullspace() {
        for kind in [LatticeKind::Square, LatticeKind::Hexagon] {
            let lat = make_lattice(kind, 1.0, 16).unwrap();
            let z = SymmetricField::zeros(&lat);
            let jw = jacobian_apply(&z, 8.0, 1.0, &kernel(&lat)).unwrap();
            assert!(jw.norm_l2() < 1e-13);
        }
        let lat = make_lattice(LatticeKind::Square, 0.7, 16).unwrap();
        let w = SymmetricField::from_orbit_amplitudes(&lat, &[((2, 0), 1.0)]).unwrap();
        let m = 4.0 + 4.0 * 0.49;
        let jw = jacobian_apply(&SymmetricField::zeros(&lat), m, 1.0, &w).unwrap();
        assert!((jw.amplitude((2, 0)) + 3.0 * 0.49).abs() < 1e-13);
    }

    #[test]
    fn matrix_matches_matrix_free_action() {
        let lat = make_lattice(LatticeKind::Hexagon, 0.8, 16).unwrap();
        let v = SymmetricField::from_orbit_amplitudes(&lat, &[((1, 0), 0.05), ((2, 1), -0.02), ((2, 0), 0.01)]).unwrap();
        let jac = jacobian_matrix(&v, 7.0, 1.3).unwrap();
        let w = SymmetricField::from_orbit_amplitudes(&lat, &[((1, 0), 0.3), ((3, 1), 0.2)]).unwrap();
        let direct = jacobian_apply(&v, 7.0, 1.3, &w).unwrap();
        let dense = &jac * DVector::from_column_slice(w.coeffs());
        for i in 1..lat.num_orbits() {
            assert!((dense[i] - direct.coeffs()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn newton_trivial_and_divergent() {
        let lat = make_lattice(LatticeKind::Square, 1.0, 16).unwrap();
        let s = newton_solve(&SymmetricField::zeros(&lat), 8.0, 1.0, 1e-10, 5).unwrap();
        assert_eq!(s.v.norm_l2(), 0.0);
        let far = kernel(&lat).scaled(10.0 * 30.0);
        assert!(newton_solve(&far, 8.0, 1.0, 1e-10, 20).is_err());
    }

    #[test]
    fn newton_iterative_path_matches_dense() {
        let lat = make_lattice(LatticeKind::Hexagon, 1.0, 16).unwrap();
        let guess = kernel(&lat).scaled(0.1);
        let dense = newton_solve(&guess, 8.06, 1.0, 1e-11, 30).unwrap();
        let opts = NewtonOptions {
            tol: 1e-11,
            dense_limit: 8,
            ..NewtonOptions::default()
        };
        let iterative = newton_solve_with(&guess, 8.06, 1.0, &opts).unwrap();
        assert!(dense.v.max_abs_diff(&iterative.v) < 1e-9);
        assert!(dense.v.norm_x() > 0.05);
    }
}
