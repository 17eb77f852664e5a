//! Closed forms for a coherent state dephasing under a static stray field
//! along the bias axis with uniform distribution on `[-bc, bc]`.

use crate::fields::FieldConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DephasingParams {
    /// `gamma b0` (rad/s)
    pub omega_s: f64,
    /// `gamma bc` (rad/s)
    pub omega_c: f64,
    pub j: f64,
}

impl DephasingParams {
    pub fn from_config(config: &FieldConfig, j: f64) -> Self {
        Self { omega_s: config.gamma * config.signal, omega_c: config.gamma * config.cutoff, j }
    }
}

/// `sin(x)/x`
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

pub fn fid_mean_jy(p: &DephasingParams, t: f64) -> f64 {
    p.j * (p.omega_s * t).sin() * sinc(p.omega_c * t)
}

/// Quantum and classical parts of the variance of `Jy`.
pub fn fid_var_jy(p: &DephasingParams, t: f64) -> (f64, f64) {
    let c2 = (2.0 * p.omega_s * t).cos() * sinc(2.0 * p.omega_c * t);
    let quantum = 0.25 * p.j * (1.0 + c2);
    let s = (p.omega_s * t).sin() * sinc(p.omega_c * t);
    let classical = 0.5 * p.j * p.j * (1.0 - c2 - 2.0 * s * s);
    (quantum.max(0.0), classical.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GAMMA_DEFAULT;

    fn params() -> DephasingParams {
        DephasingParams { omega_s: GAMMA_DEFAULT * 160e-6, omega_c: GAMMA_DEFAULT * 1e-4, j: 100.0 }
    }

    /// Composite Simpson average of `f(bz)` over the stray-field range.
    fn average(p: &DephasingParams, f: impl Fn(f64) -> f64) -> f64 {
        let n = 4000;
        let h = 2.0 * p.omega_c / n as f64;
        let mut acc = f(-p.omega_c) + f(p.omega_c);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(-p.omega_c + k as f64 * h);
        }
        acc * h / 3.0 / (2.0 * p.omega_c)
    }

    #[test]
    fn limits() {
        let mut p = params();
        assert_eq!(fid_mean_jy(&p, 0.0), 0.0);
        let (q, c) = fid_var_jy(&p, 0.0);
        assert!((q - p.j / 2.0).abs() < 1e-12 && c.abs() < 1e-9);
        p.omega_c = 0.0;
        for t in [1e-4, 3e-3, 0.2] {
            assert!((fid_mean_jy(&p, t) - p.j * (p.omega_s * t).sin()).abs() < 1e-12);
        }
        let p = DephasingParams { omega_s: 0.0, omega_c: 1e3, j: 1e4 };
        let (q, c) = fid_var_jy(&p, 1.0);
        assert!((c / (0.5 * p.j * p.j) - 1.0).abs() < 1e-3);
        assert!(c > 1e3 * q);
    }

    #[test]
    fn mean_matches_quadrature() {
        let p = params();
        for t in [1e-4, 1e-3, 2.5e-3] {
            let want = average(&p, |w| p.j * ((p.omega_s + w) * t).sin());
            assert!((fid_mean_jy(&p, t) - want).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn variances_match_quadrature() {
        let p = params();
        for t in [1e-4, 1e-3, 2.5e-3, 7e-3] {
            // Per-field moments of a rotated coherent state.
            let mean = average(&p, |w| p.j * ((p.omega_s + w) * t).sin());
            let second = average(&p, |w| {
                let phi = (p.omega_s + w) * t;
                p.j * p.j * phi.sin().powi(2) + 0.5 * p.j * phi.cos().powi(2)
            });
            let quantum = average(&p, |w| 0.5 * p.j * ((p.omega_s + w) * t).cos().powi(2));
            let (q, c) = fid_var_jy(&p, t);
            assert!((q - quantum).abs() < 1e-10, "t={t}");
            assert!((q + c - (second - mean * mean)).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn decay_envelope() {
        let p = params();
        for k in 1..200 {
            let t = 4.0 / p.omega_c * (1.0 + k as f64 * 0.1);
            assert!(fid_mean_jy(&p, t).abs() <= p.j / (p.omega_c * t) + 1e-12);
        }
    }
}
