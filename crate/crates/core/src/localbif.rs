//! Kernel elements, transversality and the Lyapunov-Schmidt expansion
//! coefficients of bifurcating branches `M(s) = M_crit + Ṁ(0) s + ½ M̈(0) s² + ...`.
//!
//! Derivatives of `F` at `v = 0` are assembled from the exact Taylor
//! coefficients of the scalar nonlinearity, `f'(0) = 1/4`, `f''(0) = -1/2`,
//! `f'''(0) = 11/8`; every quadratic product is resolved exactly by the
//! oversampled transform.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SymmetricField;
use crate::lattice::{make_lattice, Lattice, LatticeHeader, LatticeKind};

pub const F1: f64 = 0.25;
pub const F2: f64 = -0.5;
pub const F3: f64 = 11.0 / 8.0;

/// A bifurcation point of the flat state.
#[derive(Clone, Debug)]
pub struct BifurcationPointInfo {
    pub lattice: Arc<Lattice>,
    pub g: f64,
    /// Bifurcation at `M*(n k0)`, i.e. the cell fits `n` periods per direction.
    pub harmonic: u32,
    pub m_crit: f64,
    /// Kernel element with `‖kernel‖_X = 1` and positive coefficient.
    pub kernel: SymmetricField,
    pub mdot0: f64,
    pub mddot0: Option<f64>,
}

/// Serializable form of [`BifurcationPointInfo`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPointRecord {
    pub lattice: LatticeHeader,
    pub g: f64,
    pub harmonic: u32,
    #[serde(rename = "M_crit")]
    pub m_crit: f64,
    pub kernel_coeffs: Vec<f64>,
    #[serde(rename = "Mdot0")]
    pub mdot0: f64,
    #[serde(rename = "Mddot0")]
    pub mddot0: Option<f64>,
}

impl BifurcationPointInfo {
    pub fn to_record(&self) -> BifurcationPointRecord {
        BifurcationPointRecord {
            lattice: self.lattice.header(),
            g: self.g,
            harmonic: self.harmonic,
            m_crit: self.m_crit,
            kernel_coeffs: self.kernel.coeffs().to_vec(),
            mdot0: self.mdot0,
            mddot0: self.mddot0,
        }
    }

    pub fn from_record(record: &BifurcationPointRecord) -> Result<Self> {
        let h = record.lattice;
        let lattice = make_lattice(h.kind, h.k0, h.n)?;
        let kernel = SymmetricField::from_coeffs(&lattice, record.kernel_coeffs.clone())?;
        Ok(Self {
            lattice,
            g: record.g,
            harmonic: record.harmonic,
            m_crit: record.m_crit,
            kernel,
            mdot0: record.mdot0,
            mddot0: record.mddot0,
        })
    }

    /// Predicted Marangoni number at amplitude `s` along the kernel.
    pub fn predicted_m(&self, s: f64) -> f64 {
        self.m_crit + self.mdot0 * s + 0.5 * self.mddot0.unwrap_or(0.0) * s * s
    }
}

fn check_harmonic(lat: &Lattice, n: u32) -> Result<i32> {
    let n = n as i32;
    if n < 1 {
        return Err(Error::InvalidArgument("harmonic must be at least 1"));
    }
    if lat.orbit_id((n, 0)).is_none() {
        return Err(Error::InvalidArgument("critical orbit outside the truncation"));
    }
    Ok(n)
}

/// Unnormalized kernel: unit amplitude on every mode of the orbit of `(n, 0)`.
pub fn raw_kernel(lat: &Arc<Lattice>, n: u32) -> Result<SymmetricField> {
    let n = check_harmonic(lat, n)?;
    SymmetricField::from_orbit_amplitudes(lat, &[((n, 0), 1.0)])
}

/// Kernel of `∂_v F(0, M*(n k0))` on symmetric fields, normalized in `X`.
pub fn kernel_element(lat: &Arc<Lattice>, n: u32) -> Result<SymmetricField> {
    let k = raw_kernel(lat, n)?;
    let norm = k.norm_x();
    Ok(k.scaled(1.0 / norm))
}

/// Critical Marangoni number of harmonic `n`, `4 g + 4 (n k0)^2`.
pub fn critical_value(lat: &Lattice, g: f64, n: u32) -> f64 {
    let k = n as f64 * lat.k0();
    4.0 * g + 4.0 * k * k
}

/// Removes the cell average: `a - avg(a)`.
fn centered(mut a: SymmetricField) -> SymmetricField {
    a.coeffs_mut()[0] = 0.0;
    a
}

/// `∂²_{vM} F(0, ·)[w] = f'(0) (w - avg w)`.
fn mixed_derivative(w: &SymmetricField) -> SymmetricField {
    centered(w.scaled(F1))
}

/// `∂²_{vv} F(0, M)[a, b] = M f''(0) (ab - avg(ab))`.
fn second_derivative(m: f64, a: &SymmetricField, b: &SymmetricField) -> Result<SymmetricField> {
    Ok(centered(a.product(b)?.scaled(m * F2)))
}

/// Component of `∂²_{vM} F(0, M*)[ξ0]` along the unnormalized kernel `ξ0`.
pub fn transversality_check(lat: &Arc<Lattice>, g: f64, n: u32) -> Result<f64> {
    let _ = g;
    let xi = raw_kernel(lat, n)?;
    let d = mixed_derivative(&xi);
    Ok(d.inner_product_l2(&xi)? / xi.inner_product_l2(&xi)?)
}

/// Numerical `(Ṁ(0), M̈(0))`; `M̈(0)` is only defined when `Ṁ(0) = 0`.
///
/// `Ṁ(0) = -½ ⟨F_vv[k,k], k⟩ / ⟨F_vM k, k⟩`; when it vanishes
/// `M̈(0) = -⅓ (⟨F_vvv[k,k,k], k⟩ - 3 ⟨F_vv[k, A], k⟩) / ⟨F_vM k, k⟩` with
/// `A = L⁻¹ (I - Q) F_vv[k, k]`.
pub fn expansion_coefficients(lat: &Arc<Lattice>, g: f64, n: u32) -> Result<(f64, Option<f64>)> {
    let nn = check_harmonic(lat, n)?;
    // quadratic interactions must be resolved
    let needed: &[(i32, i32)] = match lat.kind() {
        LatticeKind::Square => &[(2, 0), (1, 1)],
        LatticeKind::Hexagon => &[(2, 0), (2, 1)],
    };
    for &(a, b) in needed {
        if lat.orbit_id((a * nn, b * nn)).is_none() {
            return Err(Error::InvalidArgument("truncation does not resolve quadratic interactions"));
        }
    }
    let m_crit = critical_value(lat, g, n);
    let k = kernel_element(lat, n)?;
    let kk = k.inner_product_l2(&k)?;
    let denom = mixed_derivative(&k).inner_product_l2(&k)?;
    let fvv = second_derivative(m_crit, &k, &k)?;
    let quad = fvv.inner_product_l2(&k)?;
    // Ṁ(0) vanishes exactly without resonant triads
    let mdot = if quad.abs() <= 1e-13 * kk * m_crit {
        0.0
    } else {
        -0.5 * quad / denom
    };
    if mdot != 0.0 {
        return Ok((mdot, None));
    }

    // A = L^{-1} (I - Q) F_vv[k, k] with L = Δ + (M*/4 - g), diagonal on orbits
    let mut range = fvv.clone();
    range.axpy(-quad / kk, &k);
    let shift = m_crit * F1 - g;
    let mut a_coeffs = range.coeffs().to_vec();
    let scale = shift.abs().max(1.0);
    for (id, orbit) in lat.orbits().iter().enumerate() {
        if id == 0 {
            a_coeffs[0] = 0.0;
            continue;
        }
        let symbol = shift - lat.wavenumber_sq(orbit.representative);
        let c = a_coeffs[id];
        if symbol.abs() <= 1e-12 * scale {
            if c.abs() > 1e-12 {
                return Err(Error::SingularProjection);
            }
            a_coeffs[id] = 0.0;
        } else {
            a_coeffs[id] = c / symbol;
        }
    }
    let a = SymmetricField::from_coeffs(lat, a_coeffs)?;
    // ⟨F_vvv[k,k,k], k⟩ = M f'''(0) ⟨k², k²⟩ for mean-zero k
    let k2 = k.product(&k)?;
    let cubic = m_crit * F3 * (k2.inner_product_l2(&k2)? - k2.mean() * k.mean() * lat.cell_area());
    let mixed = second_derivative(m_crit, &k, &a)?.inner_product_l2(&k)?;
    let mddot = -(cubic - 3.0 * mixed) / (3.0 * denom);
    Ok((0.0, Some(mddot)))
}

/// Closed forms of the branch coefficients at harmonic 1.
///
/// Square: `M̈(0) = -(g + k0²)(104 g + 203 k0²) / (24π² (1 + k0² + k0⁴))`.
/// The cubic term contributes `(99/8) k0² M*` and the quadratic
/// interaction through `A` contributes `13 M*²` to the numerator, with
/// `M* = 4(g + k0²)`; at `g = 1` this is `(g + k0²)(104 + 203 k0²)`.
pub fn closed_form_coefficients(kind: LatticeKind, g: f64, k0: f64) -> (f64, Option<f64>) {
    let k2 = k0 * k0;
    match kind {
        LatticeKind::Square => {
            let c = (g + k2) * (104.0 * g + 203.0 * k2) / (24.0 * PI * PI * (1.0 + k2 + k2 * k2));
            (0.0, Some(-c))
        }
        LatticeKind::Hexagon => {
            let mdot = 2.0 * (g + k2) / (Float::powf(3.0, 0.25) * PI * Float::sqrt(k2 + 1.0 + 1.0 / k2));
            (mdot, None)
        }
    }
}

/// Collects kernel, critical value and expansion coefficients.
pub fn bifurcation_point(lat: &Arc<Lattice>, g: f64, n: u32) -> Result<BifurcationPointInfo> {
    let (mdot0, mddot0) = expansion_coefficients(lat, g, n)?;
    Ok(BifurcationPointInfo {
        lattice: Arc::clone(lat),
        g,
        harmonic: n,
        m_crit: critical_value(lat, g, n),
        kernel: kernel_element(lat, n)?,
        mdot0,
        mddot0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationary::jacobian_apply;
    use alloc::vec;

    #[test]
    fn kernel_normalization_and_nullspace() {
        for kind in [LatticeKind::Square, LatticeKind::Hexagon] {
            let lat = make_lattice(kind, 1.0, 16).unwrap();
            let k = kernel_element(&lat, 1).unwrap();
            assert!((k.norm_x() - 1.0).abs() < 1e-12);
            assert!(k.amplitude((1, 0)) > 0.0);
            let jk = jacobian_apply(&SymmetricField::zeros(&lat), 8.0, 1.0, &k).unwrap();
            assert!(jk.norm_l2() < 1e-12);
        }
        let lat = make_lattice(LatticeKind::Hexagon, 1.0, 16).unwrap();
        let k = kernel_element(&lat, 1).unwrap();
        let psi_norm = 4.0 * 3f64.powf(0.25) * PI * 3f64.sqrt();
        assert!((k.value_at([0.0, 0.0]) - 6.0 / psi_norm).abs() < 1e-13);
    }

    #[test]
    fn second_harmonic_kernel_modes() {
        let lat = make_lattice(LatticeKind::Square, 1.0, 16).unwrap();
        let k = kernel_element(&lat, 2).unwrap();
        let id = lat.orbit_id((2, 0)).unwrap();
        assert_eq!(lat.orbits()[id].members, vec![(-2, 0), (0, -2), (0, 2), (2, 0)]);
        assert!(k.coeffs().iter().enumerate().all(|(i, c)| (i == id) == (*c != 0.0)));
    }

    #[test]
    fn transversality_is_one_quarter() {
        for kind in [LatticeKind::Square, LatticeKind::Hexagon] {
            let lat = make_lattice(kind, 0.7, 16).unwrap();
            for g in [0.5, 2.0] {
                assert!((transversality_check(&lat, g, 1).unwrap() - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reference_values() {
        let sq = make_lattice(LatticeKind::Square, 1.0, 16).unwrap();
        let (md, mdd) = expansion_coefficients(&sq, 1.0, 1).unwrap();
        assert_eq!(md, 0.0);
        assert!((mdd.unwrap() + 614.0 / (72.0 * PI * PI)).abs() < 1e-12);
        let hex = make_lattice(LatticeKind::Hexagon, 1.0, 16).unwrap();
        let (md, mdd) = expansion_coefficients(&hex, 1.0, 1).unwrap();
        assert!((md - 4.0 / (3f64.powf(0.75) * PI)).abs() < 1e-12);
        assert!(mdd.is_none());
    }

    #[test]
    fn closed_form_limits() {
        let (_, mdd) = closed_form_coefficients(LatticeKind::Square, 1.0, 1.0);
        assert!((mdd.unwrap() + 614.0 / (72.0 * PI * PI)).abs() < 1e-14);
        assert!((mdd.unwrap() + 0.864045).abs() < 1e-6);
        let (md, _) = closed_form_coefficients(LatticeKind::Hexagon, 1.0, 1.0);
        assert!((md - 4.0 / (3f64.powf(0.75) * PI)).abs() < 1e-14);
        assert!((md - 0.558559).abs() < 1e-6);
        let (_, mdd) = closed_form_coefficients(LatticeKind::Square, 2.0, 1e-8);
        assert!((mdd.unwrap() + 2.0 * 208.0 / (24.0 * PI * PI)).abs() < 1e-6);
    }

    #[test]
    fn record_round_trip() {
        let lat = make_lattice(LatticeKind::Hexagon, 1.0, 16).unwrap();
        let info = bifurcation_point(&lat, 1.0, 1).unwrap();
        let back = BifurcationPointInfo::from_record(&info.to_record()).unwrap();
        assert_eq!(back.kernel, info.kernel);
        assert_eq!(back.mdot0, info.mdot0);
        assert!((info.predicted_m(0.01) - 8.0 - 0.01 * info.mdot0).abs() < 1e-15);
    }
}
