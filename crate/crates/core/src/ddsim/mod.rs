//! Decoupling schedules and single-realization propagation.
//!
//! Time order inside one BUni-DD cycle is `U, X, U, X, U', X, U', X` where
//! `U'` runs with the bias reversed. Uni-DD repeats `U, X` and FID is a
//! single free segment.

mod moments;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{segment_field, BiasSign, FieldConfig, StrayField};
use crate::spinalg::{apply_pi_pulse_x, evolve_segment, Axis, SpinState};

pub use moments::{run_realization_moments, InitialMoments, Rotation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Fid,
    UniDd,
    BuniDd,
}

impl SequenceKind {
    /// Quarters (pulse intervals) per labelled cycle.
    pub fn quarters_per_cycle(self) -> u64 {
        match self {
            SequenceKind::UniDd => 2,
            SequenceKind::Fid | SequenceKind::BuniDd => 4,
        }
    }
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SequenceKind::Fid => "fid",
            SequenceKind::UniDd => "uni_dd",
            SequenceKind::BuniDd => "buni_dd",
        };
        f.write_str(name)
    }
}

impl FromStr for SequenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "fid" => Ok(SequenceKind::Fid),
            "unidd" | "uni" => Ok(SequenceKind::UniDd),
            "bunidd" | "buni" => Ok(SequenceKind::BuniDd),
            _ => Err(Error::InvalidParameter(format!("unknown sequence kind '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub duration: f64,
    pub bias_sign: BiasSign,
    /// An ideal X pulse follows the free evolution.
    pub pulse_after: bool,
}

/// Position of a sample inside the decoupling pattern.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleLabel {
    /// 1-based cycle number.
    pub cycle: u64,
    /// 1-based quarter within the cycle.
    pub quarter: u64,
    /// Time since the start of the quarter (s).
    pub offset: f64,
    /// Quarters completed before this sample, counted from t = 0.
    pub quarter_index: u64,
    /// X pulses applied before this sample.
    pub pulses_before: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplePoint {
    pub t: f64,
    /// Segment in which the sample is taken. Equal to the segment count for
    /// the sample after the last pulse.
    pub segment: usize,
    /// Time since the start of `segment`.
    pub segment_offset: f64,
    pub label: Option<SampleLabel>,
}

#[derive(Clone, Debug)]
pub struct Schedule {
    pub kind: SequenceKind,
    /// Pulse spacing, also the labelling quarter for FID.
    pub tau: f64,
    pub n_cycles: u64,
    pub segments: Vec<Segment>,
    pub samples: Vec<SamplePoint>,
}

/// Builds the schedule. Each quarter carries `samples_per_quarter` samples:
/// one at its start (right after the preceding pulse) and the rest evenly
/// spaced inside. One more sample sits at the very end.
pub fn build_schedule(kind: SequenceKind, tau: f64, n_cycles: u64, samples_per_quarter: usize) -> Result<Schedule> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    if n_cycles == 0 {
        return Err(Error::InvalidParameter("n_cycles must be >= 1".into()));
    }
    if samples_per_quarter == 0 {
        return Err(Error::InvalidParameter("samples_per_quarter must be >= 1".into()));
    }
    let qpc = kind.quarters_per_cycle();
    let quarters = qpc * n_cycles;
    let segments = match kind {
        SequenceKind::Fid => vec![Segment {
            duration: tau * quarters as f64,
            bias_sign: BiasSign::Positive,
            pulse_after: false,
        }],
        SequenceKind::UniDd => (0..quarters)
            .map(|_| Segment { duration: tau, bias_sign: BiasSign::Positive, pulse_after: true })
            .collect(),
        SequenceKind::BuniDd => (0..quarters)
            .map(|g| {
                let bias_sign = if g % 4 < 2 { BiasSign::Positive } else { BiasSign::Negative };
                Segment { duration: tau, bias_sign, pulse_after: true }
            })
            .collect(),
    };

    let step = tau / samples_per_quarter as f64;
    let mut samples = Vec::with_capacity(quarters as usize * samples_per_quarter + 1);
    for g in 0..=quarters {
        let per = if g == quarters { 1 } else { samples_per_quarter };
        for k in 0..per {
            let offset = k as f64 * step;
            let (segment, segment_offset) = match kind {
                SequenceKind::Fid if g < quarters => (0, g as f64 * tau + offset),
                SequenceKind::Fid => (1, 0.0),
                _ => (g as usize, offset),
            };
            samples.push(SamplePoint {
                t: g as f64 * tau + offset,
                segment,
                segment_offset,
                label: Some(SampleLabel {
                    cycle: g / qpc + 1,
                    quarter: g % qpc + 1,
                    offset,
                    quarter_index: g,
                    pulses_before: if kind == SequenceKind::Fid { 0 } else { g },
                }),
            });
        }
    }
    Ok(Schedule { kind, tau, n_cycles, segments, samples })
}

impl Schedule {
    /// Free decay of length `max(times)` sampled at the given times, without
    /// quarter labels.
    pub fn fid_at_times(times: &[f64]) -> Result<Schedule> {
        if times.is_empty() {
            return Err(Error::InvalidParameter("no sample times".into()));
        }
        let mut sorted = times.to_vec();
        if sorted.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidParameter("sample times must be finite and non-negative".into()));
        }
        sorted.sort_by(f64::total_cmp);
        let duration = *sorted.last().unwrap();
        let samples = sorted
            .iter()
            .map(|&t| SamplePoint { t, segment: 0, segment_offset: t, label: None })
            .collect();
        Ok(Schedule {
            kind: SequenceKind::Fid,
            tau: duration,
            n_cycles: 1,
            segments: vec![Segment { duration, bias_sign: BiasSign::Positive, pulse_after: false }],
            samples,
        })
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn pulse_count(&self) -> usize {
        self.segments.iter().filter(|s| s.pulse_after).count()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Indices of the samples taken at cycle boundaries, t = 0 included.
    pub fn cycle_boundaries(&self) -> Vec<usize> {
        let qpc = self.kind.quarters_per_cycle();
        self.samples
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                let l = s.label?;
                (l.offset == 0.0 && l.quarter_index % qpc == 0).then_some(i)
            })
            .collect()
    }

    /// Phase the bias alone has imprinted about z at every sample, wrapped
    /// to `(-pi, pi]`. Pulses negate the accumulated phase.
    pub fn bias_phases(&self, omega0: f64) -> Vec<f64> {
        let mut starts = Vec::with_capacity(self.segments.len() + 1);
        let mut beta = 0.0;
        for seg in &self.segments {
            starts.push(beta);
            beta = wrap_phase(beta + seg.bias_sign.value() * omega0 * seg.duration);
            if seg.pulse_after {
                beta = -beta;
            }
        }
        starts.push(beta);
        self.samples
            .iter()
            .map(|s| match self.segments.get(s.segment) {
                Some(seg) => wrap_phase(starts[s.segment] + seg.bias_sign.value() * omega0 * s.segment_offset),
                None => starts[s.segment],
            })
            .collect()
    }

    /// Distance of `gamma B0 tau` from the nearest multiple of `2 pi`, or
    /// zero for FID.
    pub fn magic_residual(&self, config: &FieldConfig) -> f64 {
        if self.kind == SequenceKind::Fid {
            return 0.0;
        }
        let turn = config.bias_frequency() * self.tau;
        (turn - 2.0 * PI * (turn / (2.0 * PI)).round()).abs()
    }

    /// Warning text when the pulse spacing misses the magic condition.
    pub fn magic_warning(&self, config: &FieldConfig) -> Option<String> {
        let r = self.magic_residual(config);
        (r > 1e-6).then(|| {
            format!("pulse spacing misses the magic condition: gamma B0 tau is {r:.3e} rad away from a multiple of 2 pi")
        })
    }
}

pub fn wrap_phase(x: f64) -> f64 {
    let w = x - 2.0 * PI * (x / (2.0 * PI)).round();
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Observables of one realization at the schedule's sample times.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizationSeries {
    pub jx: Vec<f64>,
    pub jy: Vec<f64>,
    pub jy2: Vec<f64>,
    pub stray: StrayField,
    pub seed: Option<u64>,
    pub warnings: Vec<String>,
}

impl RealizationSeries {
    fn with_capacity(n: usize, stray: StrayField) -> Self {
        Self {
            jx: Vec::with_capacity(n),
            jy: Vec::with_capacity(n),
            jy2: Vec::with_capacity(n),
            stray,
            seed: None,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.jy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jy.is_empty()
    }

    pub fn var_jy(&self) -> Vec<f64> {
        self.jy.iter().zip(&self.jy2).map(|(m, s)| (s - m * m).max(0.0)).collect()
    }
}

/// Propagates `state0` through the schedule and hands every sampled state to
/// `visit` in time order.
pub fn walk_states<F>(
    state0: &SpinState,
    schedule: &Schedule,
    config: &FieldConfig,
    stray: &StrayField,
    mut visit: F,
) -> Result<SpinState>
where
    F: FnMut(usize, &SpinState) -> Result<()>,
{
    state0.check_normalized()?;
    let mut psi = state0.clone();
    let mut next = 0;
    let samples = &schedule.samples;
    for (si, seg) in schedule.segments.iter().enumerate() {
        let field = segment_field(config, stray, seg.bias_sign);
        let mut clock = 0.0;
        while next < samples.len() && samples[next].segment == si {
            let dt = samples[next].segment_offset - clock;
            if dt > 0.0 {
                psi = evolve_segment(&psi, field, config.gamma, config.c2p, dt)?;
                clock = samples[next].segment_offset;
            }
            visit(next, &psi)?;
            next += 1;
        }
        let rest = seg.duration - clock;
        if rest > 0.0 {
            psi = evolve_segment(&psi, field, config.gamma, config.c2p, rest)?;
        }
        if seg.pulse_after {
            psi = apply_pi_pulse_x(&psi)?;
        }
    }
    while next < samples.len() {
        visit(next, &psi)?;
        next += 1;
    }
    Ok(psi)
}

/// State-vector propagation of one realization.
pub fn run_realization(
    state0: &SpinState,
    schedule: &Schedule,
    config: &FieldConfig,
    stray: &StrayField,
) -> Result<RealizationSeries> {
    let warning = schedule.magic_warning(config);
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    let mut series = run_realization_quiet(state0, schedule, config, stray)?;
    series.warnings.extend(warning);
    Ok(series)
}

pub(crate) fn run_realization_quiet(
    state0: &SpinState,
    schedule: &Schedule,
    config: &FieldConfig,
    stray: &StrayField,
) -> Result<RealizationSeries> {
    let mut series = RealizationSeries::with_capacity(schedule.samples.len(), *stray);
    walk_states(state0, schedule, config, stray, |_, psi| {
        let (mean, g) = psi.moments();
        series.jx.push(mean[Axis::X.index()]);
        series.jy.push(mean[Axis::Y.index()]);
        series.jy2.push(g[1][1].re);
        Ok(())
    })?;
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{magic_tau, GAMMA_DEFAULT};
    use crate::probes::prepare_css;
    use crate::spinalg::SpinMagnitude;

    fn css(j: f64) -> SpinState {
        prepare_css(SpinMagnitude::new(j).unwrap(), [1.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn schedule_shapes() {
        let s = build_schedule(SequenceKind::BuniDd, 1e-4, 1, 1).unwrap();
        assert_eq!(s.segments.len(), 4);
        assert_eq!(s.pulse_count(), 4);
        assert!((s.duration() - 4e-4).abs() < 1e-18);
        let signs: Vec<f64> = s.segments.iter().map(|g| g.bias_sign.value()).collect();
        assert_eq!(signs, vec![1.0, 1.0, -1.0, -1.0]);

        let u = build_schedule(SequenceKind::UniDd, 1e-4, 2, 3).unwrap();
        assert_eq!(u.segments.len(), 4);
        assert!(u.segments.iter().all(|g| g.pulse_after && g.duration == 1e-4));

        let f = build_schedule(SequenceKind::Fid, 1e-4, 2, 1).unwrap();
        assert_eq!(f.segments.len(), 1);
        assert_eq!(f.pulse_count(), 0);
        assert!((f.duration() - 8e-4).abs() < 1e-18);

        assert!(build_schedule(SequenceKind::BuniDd, 0.0, 1, 1).is_err());
        assert!(build_schedule(SequenceKind::BuniDd, 1e-4, 0, 1).is_err());
        assert!(build_schedule(SequenceKind::BuniDd, 1e-4, 1, 0).is_err());
        assert!("buni-dd".parse::<SequenceKind>().is_ok());
        assert!("cpmg".parse::<SequenceKind>().is_err());
    }

    #[test]
    fn sample_labels() {
        let s = build_schedule(SequenceKind::BuniDd, 1.0, 2, 4).unwrap();
        assert_eq!(s.samples.len(), 8 * 4 + 1);
        let last = s.samples.last().unwrap();
        assert_eq!(last.t, 8.0);
        let l = last.label.unwrap();
        assert_eq!((l.cycle, l.quarter, l.quarter_index), (3, 1, 8));
        let l = s.samples[13].label.unwrap();
        assert_eq!((l.cycle, l.quarter, l.offset), (1, 4, 0.25));
        assert_eq!(s.cycle_boundaries(), vec![0, 16, 32]);
        assert!(s.samples.windows(2).all(|w| w[0].t < w[1].t));

        let f = build_schedule(SequenceKind::Fid, 1.0, 1, 2).unwrap();
        assert_eq!(f.samples[3].segment, 0);
        assert_eq!(f.samples[3].segment_offset, 1.5);
        assert_eq!(f.samples[8].segment, 1);
    }

    #[test]
    fn bias_phases_vanish_at_boundaries_when_magic() {
        let cfg = FieldConfig::new(14.3e-3, 0.0, 0.0);
        let tau = magic_tau(&cfg, 1).unwrap();
        let s = build_schedule(SequenceKind::BuniDd, tau, 3, 4).unwrap();
        let beta = s.bias_phases(cfg.bias_frequency());
        for (p, b) in s.samples.iter().zip(&beta) {
            let l = p.label.unwrap();
            if l.offset == 0.0 {
                assert!(b.abs() < 1e-9, "{b}");
            } else {
                let sign = if (l.quarter_index % 4) < 2 { 1.0 } else { -1.0 };
                assert!((b - wrap_phase(sign * cfg.bias_frequency() * l.offset)).abs() < 1e-9);
            }
        }
        assert_eq!(s.magic_warning(&cfg), None);
        let off = build_schedule(SequenceKind::BuniDd, tau * 1.01, 1, 1).unwrap();
        assert!(off.magic_warning(&cfg).is_some());
    }

    #[test]
    fn refocusing_at_magic_condition() {
        let cfg = FieldConfig::new(14.3e-3, 0.0, 0.0);
        let tau = magic_tau(&cfg, 1).unwrap();
        let psi0 = css(10.0);
        let s = build_schedule(SequenceKind::BuniDd, tau, 100, 1).unwrap();
        let boundaries = s.cycle_boundaries();
        let mut worst: f64 = 0.0;
        walk_states(&psi0, &s, &cfg, &StrayField::zero(), |i, psi| {
            if boundaries.contains(&i) {
                worst = worst.max(1.0 - psi.fidelity(&psi0));
            }
            Ok(())
        })
        .unwrap();
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn fid_follows_signal_rotation() {
        let j = 7.0;
        let b0 = 3e-6;
        let cfg = FieldConfig::new(0.0, b0, 0.0);
        let times: Vec<f64> = (0..20).map(|k| k as f64 * 1e-2).collect();
        let s = Schedule::fid_at_times(&times).unwrap();
        let r = run_realization(&css(j), &s, &cfg, &StrayField::zero()).unwrap();
        for (t, jy) in times.iter().zip(&r.jy) {
            let want = j * (GAMMA_DEFAULT * b0 * t).sin();
            assert!((jy - want).abs() < 1e-9, "{jy} vs {want}");
        }
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn buni_nulls_signal_at_cycle_boundaries() {
        let cfg = FieldConfig::new(14.3e-3, 1.6e-6, 0.0);
        let tau = magic_tau(&cfg, 1).unwrap();
        let s = build_schedule(SequenceKind::BuniDd, tau, 5, 2).unwrap();
        let r = run_realization(&css(10.0), &s, &cfg, &StrayField::zero()).unwrap();
        let theta0 = cfg.gamma * cfg.signal * tau;
        for i in s.cycle_boundaries() {
            let phase = r.jy[i].atan2(r.jx[i]);
            assert!(phase.abs() < theta0.powi(3), "{phase}");
        }
        // A full quarter in, the signal phase is theta0.
        let q = s.samples.iter().position(|p| p.label.unwrap().quarter_index == 1).unwrap();
        let beta = s.bias_phases(cfg.bias_frequency());
        let before = wrap_phase(r.jy[q - 1].atan2(r.jx[q - 1]) - beta[q - 1]);
        assert!(before > 0.0 && before < theta0);
    }

    /// Phase distance from the start state after one cycle, per unit of the
    /// FID deviation over the same time.
    fn relative_deviation(kind: SequenceKind, scale: f64) -> f64 {
        let dir = [0.3, -0.8, 0.5];
        let b0_bias = 14.3e-3;
        let cfg = FieldConfig::new(b0_bias, 0.0, 0.0);
        let tau = magic_tau(&cfg, 1).unwrap();
        let stray = StrayField { bx: scale * b0_bias * dir[0], by: scale * b0_bias * dir[1], bz: scale * b0_bias * dir[2] };
        let psi0 = prepare_css(SpinMagnitude::new(3.0).unwrap(), [0.6, 0.48, 0.64]).unwrap();
        let s = build_schedule(kind, tau, 1, 1).unwrap();
        let dd = walk_states(&psi0, &s, &cfg, &stray, |_, _| Ok(())).unwrap();
        let fid = Schedule::fid_at_times(&[s.duration()]).unwrap();
        let free = walk_states(&psi0, &fid, &cfg, &stray, |_, _| Ok(())).unwrap();
        let clean = walk_states(&psi0, &fid, &cfg, &StrayField::zero(), |_, _| Ok(())).unwrap();
        dd.phase_distance(&psi0) / free.phase_distance(&clean)
    }

    fn slope(kind: SequenceKind) -> f64 {
        let scales: [f64; 4] = [1e-3, 2e-3, 4e-3, 1e-2];
        let pts: Vec<(f64, f64)> =
            scales.iter().map(|&s| (s.ln(), relative_deviation(kind, s).ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn uni_dd_suppression_is_first_order() {
        let k = slope(SequenceKind::UniDd);
        assert!((k - 1.0).abs() < 0.15, "{k}");
    }

    #[test]
    fn buni_dd_suppression_is_second_order() {
        let k = slope(SequenceKind::BuniDd);
        assert!((k - 2.0).abs() < 0.3, "{k}");
    }

    #[test]
    fn pure_z_stray_is_refocused_by_uni_dd() {
        let cfg = FieldConfig::new(14.3e-3, 0.0, 0.0);
        let tau = magic_tau(&cfg, 1).unwrap();
        let psi0 = css(4.0);
        let s = build_schedule(SequenceKind::UniDd, tau, 3, 1).unwrap();
        let stray = StrayField { bx: 0.0, by: 0.0, bz: 1e-4 };
        let end = walk_states(&psi0, &s, &cfg, &stray, |_, _| Ok(())).unwrap();
        assert!(1.0 - end.fidelity(&psi0) < 1e-10);
    }
}
