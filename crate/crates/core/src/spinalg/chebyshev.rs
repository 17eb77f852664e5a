//! Chebyshev propagation `exp(-i t H) v` for Hermitian tridiagonal `H`.
//!
//! The expansion coefficients are Bessel functions of the first kind,
//! `exp(-i x A) = J_0(x) + 2 Σ_k (-i)^k J_k(x) T_k(A)` for `A` with spectrum
//! in `[-1, 1]`. Each term costs one tridiagonal matrix-vector product.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Terms whose Bessel weight falls below this are dropped.
const COEFF_CUTOFF: f64 = 1e-18;

/// Hermitian tridiagonal matrix: `H[k][k] = diag[k]`, `H[k][k+1] = upper[k]`,
/// `H[k+1][k] = conj(upper[k])`.
#[derive(Clone, Debug)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub upper: Vec<C64>,
}

impl Tridiagonal {
    pub fn new(diag: Vec<f64>, upper: Vec<C64>) -> Self {
        assert_eq!(upper.len() + 1, diag.len().max(1));
        Self { diag, upper }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `out = H v`
    pub fn apply(&self, v: &[C64], out: &mut [C64]) {
        let n = self.dim();
        for k in 0..n {
            let mut acc = v[k] * self.diag[k];
            if k + 1 < n {
                acc += self.upper[k] * v[k + 1];
            }
            if k > 0 {
                acc += self.upper[k - 1].conj() * v[k - 1];
            }
            out[k] = acc;
        }
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..n {
            let mut radius = 0.0;
            if k + 1 < n {
                radius += self.upper[k].norm();
            }
            if k > 0 {
                radius += self.upper[k - 1].norm();
            }
            lo = lo.min(self.diag[k] - radius);
            hi = hi.max(self.diag[k] + radius);
        }
        (lo, hi)
    }
}

/// Bessel functions `J_0(x) ..= J_K(x)` for `x >= 0`, truncated where they
/// become negligible. Miller's backward recurrence with the normalization
/// `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_sequence(x: f64) -> Result<Vec<f64>> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Propagation(format!("bad Bessel argument {x}")));
    }
    if x == 0.0 {
        return Ok(vec![1.0]);
    }
    let start = (x + 40.0 + 12.0 * x.cbrt()).ceil() as usize;
    let start = start + (start % 2);
    let mut vals = vec![0.0f64; start + 2];
    vals[start] = 1e-300;
    for k in (1..=start).rev() {
        let prev = (2.0 * k as f64 / x) * vals[k] - vals[k + 1];
        vals[k - 1] = prev;
        if prev.abs() > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = vals[0];
    for k in (2..=start).step_by(2) {
        norm += 2.0 * vals[k];
    }
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::Propagation(format!(
            "Bessel recurrence failed to normalize at x = {x}"
        )));
    }
    for v in vals.iter_mut() {
        *v /= norm;
    }
    let mut last = start;
    while last > 0 && (last as f64) > x && vals[last].abs() < COEFF_CUTOFF {
        last -= 1;
    }
    vals.truncate(last + 1);
    Ok(vals)
}

/// Computes `exp(-i t H) v`. `bounds` may supply a known spectral enclosure;
/// otherwise the Gershgorin bound is used.
pub fn expm_apply(
    h: &Tridiagonal,
    t: f64,
    v: &[C64],
    bounds: Option<(f64, f64)>,
) -> Result<Vec<C64>> {
    let n = h.dim();
    if v.len() != n {
        return Err(Error::Dimension { expected: n, got: v.len() });
    }
    let (lo, hi) = bounds.unwrap_or_else(|| h.gershgorin());
    let center = 0.5 * (hi + lo);
    let radius = 0.5 * (hi - lo);
    let global = C64::from_polar(1.0, -t * center);
    let x = (t * radius).abs();
    if x == 0.0 {
        return Ok(v.iter().map(|c| c * global).collect());
    }
    let coeffs = bessel_j_sequence(x)?;
    // exp(-i t H) = e^{-i t c} exp(-i (t r) A), A = (H - c)/r. Negative t
    // flips the sign of the odd terms.
    let sign = t.signum();
    let inv_r = 1.0 / radius;

    let scaled = |src: &[C64], dst: &mut [C64]| {
        h.apply(src, dst);
        for (d, s) in dst.iter_mut().zip(src) {
            *d = (*d - s * center) * inv_r;
        }
    };

    let mut out: Vec<C64> = v.iter().map(|c| c * coeffs[0]).collect();
    if coeffs.len() == 1 {
        return Ok(out.into_iter().map(|c| c * global).collect());
    }
    let mut prev: Vec<C64> = v.to_vec();
    let mut cur = vec![C64::new(0.0, 0.0); n];
    scaled(&prev, &mut cur);
    let mut scratch = vec![C64::new(0.0, 0.0); n];
    // (-i)^k cycles through 1, -i, -1, i.
    let phases = [
        C64::new(1.0, 0.0),
        C64::new(0.0, -1.0),
        C64::new(-1.0, 0.0),
        C64::new(0.0, 1.0),
    ];
    for (k, &jk) in coeffs.iter().enumerate().skip(1) {
        let mut w = phases[k % 4] * (2.0 * jk);
        if sign < 0.0 && k % 2 == 1 {
            w = -w;
        }
        for (o, c) in out.iter_mut().zip(&cur) {
            *o += c * w;
        }
        if k + 1 < coeffs.len() {
            scaled(&cur, &mut scratch);
            for (s, p) in scratch.iter_mut().zip(&prev) {
                *s = *s * 2.0 - p;
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut scratch);
        }
    }
    Ok(out.into_iter().map(|c| c * global).collect())
}
