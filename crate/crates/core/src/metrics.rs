//! Sensitivity and its reference curves.
//!
//! Sensitivities are in G/sqrt(Hz) unless a name says otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::TESLA_PER_GAUSS;
use crate::probes::SqueezingMetrics;

/// Phase offset used for the slope `d<Jy>/dphi`.
pub const PHASE_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensitivityPoint {
    pub t: f64,
    pub eta: f64,
    pub delta_jy: f64,
    pub slope: f64,
}

impl SensitivityPoint {
    pub fn eta_tesla(&self) -> f64 {
        self.eta * TESLA_PER_GAUSS
    }
}

/// `eta = dJy / (|slope| gamma sqrt(t))`. A zero slope gives an infinite
/// `eta`.
pub fn sensitivity(delta_jy: f64, slope: f64, t: f64, gamma: f64) -> Result<SensitivityPoint> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("sensitivity needs t > 0, got {t}")));
    }
    if delta_jy < 0.0 || !delta_jy.is_finite() {
        return Err(Error::InvalidParameter(format!("bad spread {delta_jy}")));
    }
    let eta = if slope == 0.0 { f64::INFINITY } else { delta_jy / (slope.abs() * gamma * t.sqrt()) };
    Ok(SensitivityPoint { t, eta, delta_jy, slope })
}

pub fn sql_reference(j: f64, t: f64, gamma: f64) -> f64 {
    1.0 / (gamma * (2.0 * t * j).sqrt())
}

pub fn hl_reference(j: f64, t: f64, gamma: f64) -> f64 {
    1.0 / (gamma * j * t.sqrt())
}

/// `(theta / lambda) sqrt(xi2) / (gamma sqrt(2 t J))`
pub fn sss_reference(j: f64, t: f64, gamma: f64, metrics: &SqueezingMetrics, theta_t: f64) -> Result<f64> {
    if !metrics.valid || metrics.lambda <= 0.0 {
        return Err(Error::DegenerateMeanSpin(metrics.lambda));
    }
    Ok(theta_t / metrics.lambda * metrics.xi2_s.sqrt() / (gamma * (2.0 * t * j).sqrt()))
}

/// Which precession frequency enters `theta(t)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaFrequency {
    /// `gamma b0`
    #[default]
    Signal,
    /// `gamma (B0 + b0)`
    Total,
}

impl ThetaFrequency {
    pub fn omega(self, gamma: f64, bias: f64, signal: f64) -> f64 {
        match self {
            ThetaFrequency::Signal => gamma * signal,
            ThetaFrequency::Total => gamma * (bias + signal),
        }
    }
}

/// `sqrt(1 + R tan^2(omega t))` with `R = Var(Jx)/Var(Jy)` of the probe.
pub fn theta_t(ratio: f64, omega: f64, t: f64) -> f64 {
    let tan = (omega * t).tan();
    (1.0 + ratio * tan * tan).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    CssNoDd,
    SssNoDd,
    WithDd,
}

/// Noise level at which the stray field starts to limit the sensitivity
/// (Gauss).
///
/// `WithDd` solves `bc = (B0/bc)^2 / (gamma t sqrt(J))` by bisection on
/// `log bc`.
pub fn threshold_reference(kind: ThresholdKind, j: f64, t: f64, gamma: f64, bias: f64) -> Result<f64> {
    for (name, v) in [("J", j), ("t", t), ("gamma", gamma)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be positive")));
        }
    }
    match kind {
        ThresholdKind::CssNoDd => Ok(1.0 / (gamma * t * j.sqrt())),
        ThresholdKind::SssNoDd => Ok(1.0 / (gamma * t * j)),
        ThresholdKind::WithDd => {
            if !(bias > 0.0) {
                return Err(Error::InvalidParameter("B0 must be positive".into()));
            }
            let c = bias * bias / (gamma * t * j.sqrt());
            let f = |lx: f64| 3.0 * lx - c.ln();
            let (mut lo, mut hi) = (-200.0f64, 200.0f64);
            if f(lo) > 0.0 || f(hi) < 0.0 {
                return Err(Error::InvalidParameter("threshold fixed point did not converge".into()));
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-14 {
                    break;
                }
            }
            Ok((0.5 * (lo + hi)).exp())
        }
    }
}

/// Central difference of `<Jy>` under a small extra rotation `delta` about
/// z applied just before readout.
pub fn injected_slope(jx: f64, jy: f64, delta: f64) -> f64 {
    let (s, c) = delta.sin_cos();
    let plus = jy * c + jx * s;
    let minus = jy * c - jx * s;
    (plus - minus) / (2.0 * delta)
}

/// `d<Jy>/dphi` from central time differences of a series whose phase
/// advances as `omega t`.
pub fn time_slope(t: &[f64], jy: &[f64], omega: f64) -> Vec<f64> {
    let n = t.len();
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1.min(n - 1)),
                _ if i + 1 == n => (i - 1, i),
                _ => (i - 1, i + 1),
            };
            if a == b {
                return 0.0;
            }
            (jy[b] - jy[a]) / (t[b] - t[a]) / omega
        })
        .collect()
}

/// Piecewise-linear curve through the local minima of `y`; the end points
/// are kept.
pub fn lower_envelope(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n < 3 {
        return y.to_vec();
    }
    let mut knots = vec![0];
    for i in 1..n - 1 {
        if y[i] <= y[i - 1] && y[i] <= y[i + 1] {
            knots.push(i);
        }
    }
    knots.push(n - 1);
    let mut out = vec![0.0; n];
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a..=b {
            let f = if t[b] > t[a] { (t[i] - t[a]) / (t[b] - t[a]) } else { 0.0 };
            out[i] = (y[a] + f * (y[b] - y[a])).min(y[i]);
        }
    }
    out
}

/// Index and value of the smallest finite entry.
pub fn optimum(values: &[f64]) -> Option<(usize, f64)> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
}
