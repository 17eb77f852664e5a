//! Heisenberg-picture propagation of first and second spin moments.
//!
//! The Hamiltonian is linear in `J` up to the Casimir term, so each free
//! segment maps `U^dag J_a U = sum_b R_ab J_b` with `R` the rotation about
//! the field axis, and the X pulse maps `(Jx, Jy, Jz)` to `(Jx, -Jy, -Jz)`.
//! Moments at any time follow from the moments of the initial state.

use crate::error::{Error, Result};
use crate::fields::{segment_field, FieldConfig, StrayField};
use crate::spinalg::SpinState;

use super::{RealizationSeries, Schedule};

/// `<J>` and the symmetrized second moments `Re <J_a J_b>` of a state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialMoments {
    pub mean: [f64; 3],
    pub second: [[f64; 3]; 3],
}

impl InitialMoments {
    pub fn from_state(state: &SpinState) -> Result<Self> {
        state.check_normalized()?;
        let (mean, g) = state.moments();
        let mut second = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                second[a][b] = 0.5 * (g[a][b].re + g[b][a].re);
            }
        }
        Ok(Self { mean, second })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(pub [[f64; 3]; 3]);

impl Rotation {
    pub fn identity() -> Self {
        Rotation([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn pulse_x() -> Self {
        Rotation([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
    }

    /// Right-handed rotation by `angle` about the unit vector `n`.
    pub fn axis_angle(n: [f64; 3], angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let k = 1.0 - c;
        let [x, y, z] = n;
        Rotation([
            [c + k * x * x, k * x * y - s * z, k * x * z + s * y],
            [k * y * x + s * z, c + k * y * y, k * y * z - s * x],
            [k * z * x - s * y, k * z * y + s * x, c + k * z * z],
        ])
    }

    /// Heisenberg map of free evolution under `gamma B.J` for `dt`.
    pub fn precession(field: [f64; 3], gamma: f64, dt: f64) -> Self {
        let mag = (field[0] * field[0] + field[1] * field[1] + field[2] * field[2]).sqrt();
        if mag == 0.0 || dt == 0.0 {
            return Self::identity();
        }
        Self::axis_angle([field[0] / mag, field[1] / mag, field[2] / mag], gamma * mag * dt)
    }

    /// `self * other`: apply `other` first in time.
    pub fn then_after(&self, other: &Rotation) -> Rotation {
        let (a, b) = (&self.0, &other.0);
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        Rotation(out)
    }

    pub fn mean(&self, m: &InitialMoments, row: usize) -> f64 {
        let r = &self.0[row];
        r[0] * m.mean[0] + r[1] * m.mean[1] + r[2] * m.mean[2]
    }

    pub fn second(&self, m: &InitialMoments, a: usize, b: usize) -> f64 {
        let (ra, rb) = (&self.0[a], &self.0[b]);
        let mut acc = 0.0;
        for c in 0..3 {
            for d in 0..3 {
                acc += ra[c] * rb[d] * m.second[c][d];
            }
        }
        acc
    }
}

/// Same output as `run_realization`, from the initial moments alone.
pub fn run_realization_moments(
    init: &InitialMoments,
    schedule: &Schedule,
    config: &FieldConfig,
    stray: &StrayField,
) -> Result<RealizationSeries> {
    if stray.as_array().iter().any(|b| !b.is_finite()) || !config.gamma.is_finite() {
        return Err(Error::NonFiniteField);
    }
    let n = schedule.samples.len();
    let mut series = RealizationSeries::with_capacity(n, *stray);
    let mut record = |r: &Rotation| {
        series.jx.push(r.mean(init, 0));
        series.jy.push(r.mean(init, 1));
        series.jy2.push(r.second(init, 1, 1));
    };

    let samples = &schedule.samples;
    let mut next = 0;
    let mut rot = Rotation::identity();
    for (si, seg) in schedule.segments.iter().enumerate() {
        if seg.duration < 0.0 {
            return Err(Error::NegativeDuration(seg.duration));
        }
        let field = segment_field(config, stray, seg.bias_sign);
        while next < n && samples[next].segment == si {
            let partial = Rotation::precession(field, config.gamma, samples[next].segment_offset);
            record(&partial.then_after(&rot));
            next += 1;
        }
        rot = Rotation::precession(field, config.gamma, seg.duration).then_after(&rot);
        if seg.pulse_after {
            rot = Rotation::pulse_x().then_after(&rot);
        }
    }
    while next < n {
        record(&rot);
        next += 1;
    }
    Ok(series)
}
