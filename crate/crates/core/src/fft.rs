//! Mixed-radix complex FFT and 2-D periodic transforms.
//!
//! Lengths are arbitrary; factors 4 and 2 get dedicated butterflies, every
//! other prime factor goes through a generic DFT butterfly. The transforms
//! are unnormalized: `inverse(forward(x)) == n * x`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Float;

#[derive(Clone, Debug)]
pub struct Fft {
    len: usize,
    factors: Vec<(usize, usize)>,
    twiddles: Vec<Complex64>,
    inverse: bool,
}

impl Fft {
    pub fn new(len: usize, inverse: bool) -> Self {
        assert!(len > 0, "FFT length must be positive");
        let sign = if inverse { 1.0 } else { -1.0 };
        let twiddles = (0..len)
            .map(|k| {
                let phase = sign * 2.0 * PI * (k as f64) / (len as f64);
                Complex64::new(Float::cos(phase), Float::sin(phase))
            })
            .collect();
        Self {
            len,
            factors: factorize(len),
            twiddles,
            inverse,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_inverse(&self) -> bool {
        self.inverse
    }

    /// Transforms `input` (read with stride `stride`) into `output`.
    pub fn process_strided(&self, input: &[Complex64], stride: usize, output: &mut [Complex64]) {
        debug_assert!(output.len() >= self.len);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.max_radix()];
        self.work(&mut output[..self.len], input, 1, stride, 0, &mut scratch);
    }

    pub fn process(&self, input: &[Complex64], output: &mut [Complex64]) {
        self.process_strided(input, 1, output);
    }

    fn max_radix(&self) -> usize {
        self.factors.iter().map(|&(p, _)| p).max().unwrap_or(1)
    }

    fn work(
        &self,
        out: &mut [Complex64],
        input: &[Complex64],
        fstride: usize,
        in_stride: usize,
        stage: usize,
        scratch: &mut [Complex64],
    ) {
        let (p, m) = self.factors[stage];
        if m == 1 {
            for (q, o) in out.iter_mut().take(p).enumerate() {
                *o = input[q * fstride * in_stride];
            }
        } else {
            for q in 0..p {
                self.work(
                    &mut out[q * m..(q + 1) * m],
                    &input[q * fstride * in_stride..],
                    fstride * p,
                    in_stride,
                    stage + 1,
                    scratch,
                );
            }
        }
        match p {
            2 => self.butterfly2(out, fstride, m),
            4 => self.butterfly4(out, fstride, m),
            _ => self.butterfly_generic(out, fstride, p, m, scratch),
        }
    }

    fn butterfly2(&self, out: &mut [Complex64], fstride: usize, m: usize) {
        for k in 0..m {
            let t = out[k + m] * self.twiddles[k * fstride];
            out[k + m] = out[k] - t;
            out[k] += t;
        }
    }

    fn butterfly4(&self, out: &mut [Complex64], fstride: usize, m: usize) {
        for k in 0..m {
            let a0 = out[k];
            let a1 = out[k + m] * self.twiddles[k * fstride];
            let a2 = out[k + 2 * m] * self.twiddles[2 * k * fstride];
            let a3 = out[k + 3 * m] * self.twiddles[3 * k * fstride];
            let s0 = a0 + a2;
            let s1 = a0 - a2;
            let s2 = a1 + a3;
            let d = a1 - a3;
            // multiply by -i (forward) or +i (inverse)
            let s3 = if self.inverse {
                Complex64::new(-d.im, d.re)
            } else {
                Complex64::new(d.im, -d.re)
            };
            out[k] = s0 + s2;
            out[k + m] = s1 + s3;
            out[k + 2 * m] = s0 - s2;
            out[k + 3 * m] = s1 - s3;
        }
    }

    fn butterfly_generic(
        &self,
        out: &mut [Complex64],
        fstride: usize,
        p: usize,
        m: usize,
        scratch: &mut [Complex64],
    ) {
        let n = self.len;
        for u in 0..m {
            for q1 in 0..p {
                scratch[q1] = out[u + q1 * m];
            }
            for q1 in 0..p {
                let k = u + q1 * m;
                let mut acc = scratch[0];
                let mut idx = 0usize;
                for s in scratch.iter().take(p).skip(1) {
                    idx += fstride * k;
                    idx %= n;
                    acc += *s * self.twiddles[idx];
                }
                out[k] = acc;
            }
        }
    }
}

fn factorize(mut n: usize) -> Vec<(usize, usize)> {
    let total = n;
    let mut radices = Vec::new();
    while n % 4 == 0 {
        radices.push(4);
        n /= 4;
    }
    while n % 2 == 0 {
        radices.push(2);
        n /= 2;
    }
    let mut p = 3;
    while n > 1 {
        if p * p > n {
            radices.push(n);
            break;
        }
        while n % p == 0 {
            radices.push(p);
            n /= p;
        }
        p += 2;
    }
    if radices.is_empty() {
        radices.push(1);
    }
    let mut remaining = total;
    radices
        .into_iter()
        .map(|r| {
            remaining /= r;
            (r, remaining)
        })
        .collect()
}

/// Square 2-D periodic transform on an `n x n` row-major table.
#[derive(Clone, Debug)]
pub struct Fft2 {
    n: usize,
    forward: Fft,
    inverse: Fft,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            forward: Fft::new(n, false),
            inverse: Fft::new(n, true),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// In-place unnormalized forward transform (`exp(-i ...)` kernel).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(&self.forward, data);
    }

    /// In-place unnormalized inverse transform (`exp(+i ...)` kernel).
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(&self.inverse, data);
    }

    fn apply(&self, plan: &Fft, data: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(data.len(), n * n, "table size does not match transform");
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for row in data.chunks_exact_mut(n) {
            plan.process(row, &mut line);
            row.copy_from_slice(&line);
        }
        for col in 0..n {
            plan.process_strided(&data[col..], n, &mut line);
            for (r, value) in line.iter().enumerate() {
                data[r * n + col] = *value;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
        let n = x.len();
        let sign = if inverse { 1.0 } else { -1.0 };
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (j, v)| {
                    let phase = sign * 2.0 * PI * ((j * k) % n) as f64 / n as f64;
                    acc + v * Complex64::new(phase.cos(), phase.sin())
                })
            })
            .collect()
    }

    fn sample(n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|j| Complex64::new((j as f64 * 0.37).sin() + 0.1 * j as f64, (j as f64 * 1.3).cos()))
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_mixed_lengths() {
        for n in [1, 2, 3, 4, 5, 6, 8, 12, 16, 30, 49, 64, 100, 128] {
            let x = sample(n);
            for inverse in [false, true] {
                let mut out = vec![Complex64::new(0.0, 0.0); n];
                Fft::new(n, inverse).process(&x, &mut out);
                let expect = naive_dft(&x, inverse);
                for (a, b) in out.iter().zip(&expect) {
                    assert!((a - b).norm() < 1e-10 * n as f64, "n = {n}");
                }
            }
        }
    }

    #[test]
    fn two_dimensional_round_trip() {
        let n = 12;
        let plan = Fft2::new(n);
        let orig: Vec<Complex64> = (0..n * n)
            .map(|j| Complex64::new((j as f64).sin(), (0.5 * j as f64).cos()))
            .collect();
        let mut data = orig.clone();
        plan.forward(&mut data);
        plan.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a / (n * n) as f64 - b).norm() < 1e-13);
        }
    }
}
