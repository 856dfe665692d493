//! Dense and iterative linear algebra used by the solvers.
//!
//! Symmetric spectra and LU solves come from nalgebra. Eigenvalues of
//! general real matrices use balancing, reduction to Hessenberg form by
//! stabilized elimination and the Francis double-shift QR iteration with
//! exceptional shifts.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::Float;

use crate::error::{Error, Result};

/// Solves `a x = b` by LU with partial pivoting.
pub fn lu_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.lu();
    let x = lu.solve(b).ok_or(Error::SingularSystem)?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SingularSystem)
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted in
/// descending order with matching eigenvector columns.
/// Eigenvalues of a symmetric matrix in descending order.
pub fn symmetric_eigenvalues(a: DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut values: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|x, y| y.total_cmp(x));
    values
}

pub fn symmetric_eigen(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = nalgebra::SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Row-major dense scratch matrix for the QR iteration.
struct Dense {
    n: usize,
    data: Vec<f64>,
}

impl Dense {
    fn from_matrix(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = a[(i, j)];
            }
        }
        Self { n, data }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

fn balance(a: &mut Dense) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let n = a.n;
    loop {
        let mut done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += Float::abs(a.at(j, i));
                    r += Float::abs(a.at(i, j));
                }
            }
            if c != 0.0 && r != 0.0 {
                let s = c + r;
                let mut f = 1.0;
                let mut g = r / RADIX;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let ginv = 1.0 / f;
                    for j in 0..n {
                        *a.at_mut(i, j) *= ginv;
                    }
                    for j in 0..n {
                        *a.at_mut(j, i) *= f;
                    }
                }
            }
        }
        if done {
            break;
        }
    }
}

fn reduce_to_hessenberg(a: &mut Dense) {
    let n = a.n;
    for m in 1..n.saturating_sub(1) {
        let mut x = 0.0;
        let mut pivot = m;
        for j in m..n {
            if Float::abs(a.at(j, m - 1)) > Float::abs(x) {
                x = a.at(j, m - 1);
                pivot = j;
            }
        }
        if pivot != m {
            for j in (m - 1)..n {
                a.data.swap(pivot * n + j, m * n + j);
            }
            for j in 0..n {
                a.data.swap(j * n + pivot, j * n + m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..n {
                let mut y = a.at(i, m - 1);
                if y != 0.0 {
                    y /= x;
                    *a.at_mut(i, m - 1) = y;
                    for j in m..n {
                        let t = a.at(m, j);
                        *a.at_mut(i, j) -= y * t;
                    }
                    for j in 0..n {
                        let t = a.at(j, i);
                        *a.at_mut(j, m) += y * t;
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            *a.at_mut(i, j) = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        Float::abs(a)
    } else {
        -Float::abs(a)
    }
}

/// Eigenvalues of an upper Hessenberg matrix (destroyed on exit).
fn hessenberg_qr(h: &mut Dense) -> Result<Vec<Complex64>> {
    let n = h.n;
    // 1-based accessors keep the classical formulation readable
    macro_rules! a {
        ($i:expr, $j:expr) => {
            h.data[($i - 1) * n + ($j - 1)]
        };
    }
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.max(2) - 1..=n {
            anorm += Float::abs(a!(i, j));
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = Float::abs(a!(l - 1, l - 1)) + Float::abs(a!(l, l));
                if s == 0.0 {
                    s = anorm;
                }
                if Float::abs(a!(l, l - 1)) + s == s {
                    a!(l, l - 1) = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a!(nn, nn);
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
            } else {
                let mut y = a!(nn - 1, nn - 1);
                let mut w = a!(nn, nn - 1) * a!(nn - 1, nn);
                if l == nn - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = Float::sqrt(Float::abs(q));
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != 0.0 {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn = nn.saturating_sub(2);
                } else {
                    if its == 60 {
                        return Err(Error::NoConvergence {
                            iterations: its,
                            residual: Float::abs(a!(nn, nn - 1)),
                        });
                    }
                    if its == 10 || its == 20 || its == 40 {
                        // exceptional shift
                        t += x;
                        for i in 1..=nn {
                            a!(i, i) -= x;
                        }
                        let s = Float::abs(a!(nn, nn - 1)) + Float::abs(a!(nn - 1, nn - 2));
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    let (mut p, mut q, mut r);
                    let mut z;
                    loop {
                        z = a!(m, m);
                        r = x - z;
                        let s0 = y - z;
                        p = (r * s0 - w) / a!(m + 1, m) + a!(m, m + 1);
                        q = a!(m + 1, m + 1) - z - r - s0;
                        r = a!(m + 2, m + 1);
                        let s = Float::abs(p) + Float::abs(q) + Float::abs(r);
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = Float::abs(a!(m, m - 1)) * (Float::abs(q) + Float::abs(r));
                        let v = Float::abs(p) * (Float::abs(a!(m - 1, m - 1)) + Float::abs(z) + Float::abs(a!(m + 1, m + 1)));
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nn {
                        a!(i, i - 2) = 0.0;
                        if i != m + 2 {
                            a!(i, i - 3) = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = a!(k, k - 1);
                            q = a!(k + 1, k - 1);
                            r = 0.0;
                            if k != nn - 1 {
                                r = a!(k + 2, k - 1);
                            }
                            x = Float::abs(p) + Float::abs(q) + Float::abs(r);
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign(Float::sqrt(p * p + q * q + r * r), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a!(k, k - 1) = -a!(k, k - 1);
                                }
                            } else {
                                a!(k, k - 1) = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                p = a!(k, j) + q * a!(k + 1, j);
                                if k != nn - 1 {
                                    p += r * a!(k + 2, j);
                                    a!(k + 2, j) -= p * z;
                                }
                                a!(k + 1, j) -= p * y;
                                a!(k, j) -= p * x;
                            }
                            let mmin = nn.min(k + 3);
                            for i in l..=mmin {
                                p = x * a!(i, k) + y * a!(i, k + 1);
                                if k != nn - 1 {
                                    p += z * a!(i, k + 2);
                                    a!(i, k + 2) -= p * r;
                                }
                                a!(i, k + 1) -= p * q;
                                a!(i, k) -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 2 || l + 1 >= nn {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}

/// All eigenvalues of a general real matrix, sorted by descending real
/// part (ties by descending imaginary part).
pub fn general_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    assert!(a.is_square(), "eigenvalues need a square matrix");
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries"));
    }
    let mut d = Dense::from_matrix(a);
    balance(&mut d);
    reduce_to_hessenberg(&mut d);
    let mut values = hessenberg_qr(&mut d)?;
    sort_descending(&mut values);
    Ok(values)
}

pub fn sort_descending(values: &mut [Complex64]) {
    values.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
}

/// Eigenvector for a real eigenvalue near `shift` by inverse iteration.
/// Returned with unit Euclidean norm and a positive largest component.
pub fn inverse_iteration(a: &DMatrix<f64>, shift: f64) -> Result<DVector<f64>> {
    let n = a.nrows();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(Float::abs(*v))).max(1.0);
    // nudge the shift so the shifted matrix is not exactly singular
    let mu = shift + 1e-10 * scale;
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= mu;
    }
    let lu = shifted.lu();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919 % 101) as f64 / 101.0));
    x /= x.norm();
    for _ in 0..8 {
        let y = lu.solve(&x).ok_or(Error::SingularSystem)?;
        let norm = y.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::SingularSystem);
        }
        x = y / norm;
    }
    let imax = x.iamax();
    if x[imax] < 0.0 {
        x = -x;
    }
    Ok(x)
}

/// Preconditioned MINRES for a symmetric operator `apply` with a diagonal
/// positive definite preconditioner (`precond_inv[i]` multiplies component
/// `i`). Stops when the preconditioned residual has dropped by `rtol`.
pub fn minres(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    precond_inv: &[f64],
    b: &[f64],
    rtol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let precond = |r: &[f64]| r.iter().zip(precond_inv).map(|(a, p)| a * p).collect::<Vec<f64>>();

    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut y = precond(&r1);
    let beta1 = Float::sqrt(dot(&r1, &y));
    if beta1 == 0.0 {
        return Ok(x);
    }
    if !beta1.is_finite() {
        return Err(Error::SingularSystem);
    }
    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut av = vec![0.0; n];
    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        let v: Vec<f64> = y.iter().map(|yi| s * yi).collect();
        apply(&v, &mut av);
        y.copy_from_slice(&av);
        if itn >= 2 {
            let f = beta / oldb;
            for (yi, ri) in y.iter_mut().zip(&r1) {
                *yi -= f * ri;
            }
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        for (yi, ri) in y.iter_mut().zip(&r2) {
            *yi -= f * ri;
        }
        core::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        y = precond(&r2);
        oldb = beta;
        beta = Float::sqrt(dot(&r2, &y).max(0.0));
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = Float::sqrt(gbar * gbar + beta * beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        let w1 = core::mem::replace(&mut w2, w.clone());
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        if phibar <= rtol * beta1 || beta == 0.0 {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: phibar / beta1,
    })
}
