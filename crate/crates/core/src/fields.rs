//! Field configuration, stray-field sampling and the magic pulse spacing.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RealizationStream;

/// Gyromagnetic ratio `2 pi x 0.70 MHz/G`, in rad/(s G).
pub const GAMMA_DEFAULT: f64 = 2.0 * PI * 0.70e6;
/// Gauss to Tesla.
pub const TESLA_PER_GAUSS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Three independent uniform components.
    Full3d,
    /// Only `bz` fluctuates.
    Dephasing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BiasSign {
    Positive,
    Negative,
}

impl BiasSign {
    pub fn value(self) -> f64 {
        match self {
            BiasSign::Positive => 1.0,
            BiasSign::Negative => -1.0,
        }
    }
}

/// Fields in Gauss, `gamma` in rad/(s G).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldConfig {
    /// Bias `B0` along +z.
    pub bias: f64,
    /// Signal `b0` along +z.
    pub signal: f64,
    /// Stray-field cutoff `bc`.
    pub cutoff: f64,
    pub gamma: f64,
    pub noise_model: NoiseModel,
    /// Spin-exchange strength `c2'` (rad/s). Enters only as a global phase.
    pub c2p: f64,
}

impl FieldConfig {
    pub fn new(bias: f64, signal: f64, cutoff: f64) -> Self {
        Self { bias, signal, cutoff, gamma: GAMMA_DEFAULT, noise_model: NoiseModel::Full3d, c2p: 0.0 }
    }

    pub fn with_noise_model(mut self, model: NoiseModel) -> Self {
        self.noise_model = model;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Hard errors for nonsensical values; soft warnings when the bias does
    /// not dominate the signal and the noise cutoff.
    pub fn validate(&self) -> Result<Vec<String>> {
        for (name, v) in [("B0", self.bias), ("b0", self.signal), ("bc", self.cutoff), ("gamma", self.gamma)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if self.cutoff < 0.0 {
            return Err(Error::InvalidParameter("bc must be non-negative".into()));
        }
        if self.bias < 0.0 {
            return Err(Error::InvalidParameter("B0 must be non-negative".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidParameter("gamma must be positive".into()));
        }
        let mut warnings = Vec::new();
        if self.bias > 0.0 && self.signal.abs() * 10.0 > self.bias {
            warnings.push(format!("bias B0 = {:e} G does not dominate the signal b0 = {:e} G", self.bias, self.signal));
        }
        if self.bias > 0.0 && self.cutoff * 10.0 > self.bias {
            warnings.push(format!("bias B0 = {:e} G does not dominate the noise cutoff bc = {:e} G", self.bias, self.cutoff));
        }
        Ok(warnings)
    }

    /// `omega0 = gamma B0`
    pub fn bias_frequency(&self) -> f64 {
        self.gamma * self.bias
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StrayField {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl StrayField {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.bx, self.by, self.bz]
    }
}

/// `tau = 2 m pi / (gamma B0)`: the bias turns the spin `m` full times per
/// pulse interval.
pub fn magic_tau(config: &FieldConfig, m: u32) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("magic index m must be >= 1".into()));
    }
    if !(config.bias > 0.0) {
        return Err(Error::InvalidParameter("magic condition needs B0 > 0".into()));
    }
    Ok(2.0 * PI * m as f64 / (config.gamma * config.bias))
}

pub fn sample_stray(config: &FieldConfig, stream: &mut RealizationStream) -> StrayField {
    let bc = config.cutoff;
    match config.noise_model {
        NoiseModel::Full3d => {
            let bx = stream.symmetric(bc);
            let by = stream.symmetric(bc);
            let bz = stream.symmetric(bc);
            StrayField { bx, by, bz }
        }
        NoiseModel::Dephasing => StrayField { bx: 0.0, by: 0.0, bz: stream.symmetric(bc) },
    }
}

/// Total field during one free-evolution segment. Only the bias follows
/// `sign`; the signal and the stray field keep their orientation.
pub fn segment_field(config: &FieldConfig, stray: &StrayField, sign: BiasSign) -> [f64; 3] {
    [stray.bx, stray.by, sign.value() * config.bias + config.signal + stray.bz]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_config() -> FieldConfig {
        FieldConfig::new(14.3e-3, 1.6e-6, 1e-4)
    }

    #[test]
    fn magic_tau_values() {
        let mut cfg = reference_config();
        // omega0 = 2 pi x 10 kHz -> tau = 0.1 ms
        let tau = magic_tau(&cfg, 1).unwrap();
        assert!((tau - 1e-4).abs() < 1e-4 * 1e-3, "{tau}");
        assert_eq!(magic_tau(&cfg, 2).unwrap(), 2.0 * tau);
        cfg.bias = 1.0;
        assert!((magic_tau(&cfg, 1).unwrap() - 1.0 / 0.70e6).abs() < 1e-15);
        cfg.bias = 0.0;
        assert!(magic_tau(&cfg, 1).is_err());
        assert!(magic_tau(&reference_config(), 0).is_err());
    }

    #[test]
    fn zero_cutoff_gives_zero_field() {
        let mut cfg = reference_config();
        cfg.cutoff = 0.0;
        let mut s = RealizationStream::new(3, 0);
        assert_eq!(sample_stray(&cfg, &mut s), StrayField::zero());
    }

    #[test]
    fn uniform_moments() {
        let cfg = FieldConfig::new(14.3e-3, 0.0, 1e-4);
        let n = 1_000_000usize;
        let mut s = RealizationStream::new(11, 0);
        let mut sum = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        for _ in 0..n {
            let b = sample_stray(&cfg, &mut s).as_array();
            for k in 0..3 {
                assert!(b[k].abs() <= 1e-4);
                sum[k] += b[k];
                sq[k] += b[k] * b[k];
            }
        }
        let var_expect = 1e-8 / 3.0;
        for k in 0..3 {
            let mean = sum[k] / n as f64;
            let var = sq[k] / n as f64 - mean * mean;
            assert!(mean.abs() < 4.0 * (var_expect / n as f64).sqrt());
            assert!((var / var_expect - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn dephasing_model_is_longitudinal() {
        let cfg = reference_config().with_noise_model(NoiseModel::Dephasing);
        let mut s = RealizationStream::new(5, 9);
        for _ in 0..100 {
            let b = sample_stray(&cfg, &mut s);
            assert_eq!(b.bx, 0.0);
            assert_eq!(b.by, 0.0);
            assert!(b.bz.abs() <= 1e-4);
        }
    }

    #[test]
    fn segment_field_signs() {
        let cfg = reference_config();
        let zero = StrayField::zero();
        assert_eq!(segment_field(&cfg, &zero, BiasSign::Positive), [0.0, 0.0, 14.3e-3 + 1.6e-6]);
        assert_eq!(segment_field(&cfg, &zero, BiasSign::Negative), [0.0, 0.0, -14.3e-3 + 1.6e-6]);
        let b = StrayField { bx: 1e-5, by: -2e-5, bz: 3e-5 };
        let f = segment_field(&cfg, &b, BiasSign::Positive);
        assert_eq!(f[0], 1e-5);
        assert_eq!(f[1], -2e-5);
        assert_eq!(f[2], 14.3e-3 + 1.6e-6 + 3e-5);
    }

    #[test]
    fn validation() {
        assert!(reference_config().validate().unwrap().is_empty());
        let mut cfg = reference_config();
        cfg.cutoff = -1.0;
        assert!(cfg.validate().is_err());
        cfg.cutoff = 0.01;
        assert_eq!(cfg.validate().unwrap().len(), 1);
    }
}
