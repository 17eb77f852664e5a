//! Phase relay estimation of the signal field.
//!
//! Under decoupling the signal phase traces a sawtooth: it grows by
//! `theta0 = gamma b0 tau` over each quarter and the pulses fold it back.
//! Adding `2 ceil(p/2) theta0` to a sample preceded by `p` pulses turns the
//! sawtooth into the line `gamma b0 t`. The relayed residual from that line
//! is quadratic in the trial `theta0`, so its minimizer is explicit.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ddsim::{wrap_phase, SampleLabel, Schedule};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    /// `asin(<Jy> / A)`; only at samples where the bias phase is a whole
    /// number of turns.
    ArcsinJy,
    /// `atan2(<Jy>, <Jx>)`
    #[default]
    Atan2Xy,
    /// Fit `A sin(beta + phi)` over a window of samples within one quarter,
    /// with `beta` the known bias phase.
    SinusoidFit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Amplitude {
    /// Fixed contrast, e.g. `lambda J` of the probe.
    Fixed(f64),
    /// Per-sample transverse length `sqrt(<Jx>^2 + <Jy>^2)`.
    Envelope,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractOptions {
    pub mode: ExtractionMode,
    pub amplitude: Amplitude,
    /// Samples per fit window in `SinusoidFit` mode.
    pub window: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { mode: ExtractionMode::Atan2Xy, amplitude: Amplitude::Envelope, window: 5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSeries {
    pub t: Vec<f64>,
    /// Schedule sample each entry came from.
    pub index: Vec<usize>,
    pub labels: Vec<Option<SampleLabel>>,
    /// Total phase about z, principal branch.
    pub total: Vec<f64>,
    /// Phase with the bias contribution removed, unwrapped along time.
    pub signal: Vec<f64>,
    /// Entries where `|<Jy>| / A` exceeded 1.
    pub flagged: Vec<usize>,
}

impl PhaseSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Nearest-continuation unwrapping: steps larger than `pi` are taken to be
/// branch jumps.
pub fn unwrap(phases: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(phases.len());
    let mut turns = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let step = p + turns - out[i - 1];
            turns -= 2.0 * PI * (step / (2.0 * PI)).round();
        }
        out.push(p + turns);
    }
    out
}

pub fn extract_phase(
    jx: &[f64],
    jy: &[f64],
    schedule: &Schedule,
    omega0: f64,
    opts: &ExtractOptions,
) -> Result<PhaseSeries> {
    let n = schedule.samples.len();
    if jx.len() != n || jy.len() != n {
        return Err(Error::Dimension { expected: n, got: jx.len().min(jy.len()) });
    }
    let beta = schedule.bias_phases(omega0);
    let amplitude = |i: usize| match opts.amplitude {
        Amplitude::Fixed(a) => a,
        Amplitude::Envelope => jx[i].hypot(jy[i]),
    };
    let mut index = Vec::with_capacity(n);
    let mut total = Vec::with_capacity(n);
    let mut flagged = Vec::new();
    for i in 0..n {
        let phase = match opts.mode {
            ExtractionMode::Atan2Xy => jy[i].atan2(jx[i]),
            ExtractionMode::ArcsinJy => {
                if beta[i].abs() > 1e-6 {
                    continue;
                }
                let ratio = jy[i] / amplitude(i);
                if ratio.abs() > 1.0 + 1e-6 || !ratio.is_finite() {
                    flagged.push(index.len());
                }
                ratio.clamp(-1.0, 1.0).asin()
            }
            ExtractionMode::SinusoidFit => {
                let (lo, hi) = fit_window(schedule, i, opts.window.max(1));
                let phi = fit_sinusoid(&jy[lo..hi], &beta[lo..hi], amplitude(i))?;
                wrap_phase(beta[i] + phi)
            }
        };
        index.push(i);
        total.push(phase);
    }
    let signal_raw: Vec<f64> = index.iter().zip(&total).map(|(&i, p)| wrap_phase(p - beta[i])).collect();
    Ok(PhaseSeries {
        t: index.iter().map(|&i| schedule.samples[i].t).collect(),
        labels: index.iter().map(|&i| schedule.samples[i].label).collect(),
        index,
        total,
        signal: unwrap(&signal_raw),
        flagged,
    })
}

/// Window of up to `width` samples around `i` that share its quarter.
fn fit_window(schedule: &Schedule, i: usize, width: usize) -> (usize, usize) {
    let samples = &schedule.samples;
    let same = |j: usize| samples[j].segment == samples[i].segment;
    let half = width / 2;
    let mut lo = i;
    while lo > 0 && i - (lo - 1) <= half && same(lo - 1) {
        lo -= 1;
    }
    let mut hi = i + 1;
    while hi < samples.len() && hi - lo < width && same(hi) {
        hi += 1;
    }
    (lo, hi)
}

/// Least-squares `phi` in `y ~ a sin(beta + phi)`.
fn fit_sinusoid(y: &[f64], beta: &[f64], a: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParameter(format!("fit amplitude must be positive, got {a}")));
    }
    let cost = |phi: f64| -> f64 { y.iter().zip(beta).map(|(v, b)| (v - a * (b + phi).sin()).powi(2)).sum() };
    const GRID: usize = 360;
    let step = 2.0 * PI / GRID as f64;
    let best = (0..GRID)
        .map(|k| -PI + k as f64 * step)
        .min_by(|x, y| cost(*x).total_cmp(&cost(*y)))
        .unwrap_or(0.0);
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (best - step, best + step);
    let mut c = hi - invphi * (hi - lo);
    let mut d = lo + invphi * (hi - lo);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while hi - lo > 1e-12 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - invphi * (hi - lo);
            fc = cost(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + invphi * (hi - lo);
            fd = cost(d);
        }
    }
    let mut phi = wrap_phase(0.5 * (lo + hi));
    // A flat bias phase leaves phi and pi - phi equally good.
    let spread = beta.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - beta.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread < 1e-9 && phi.abs() > PI / 2.0 {
        phi = wrap_phase(PI - phi);
    }
    Ok(phi)
}

/// Multiple of `theta0` added at a sample preceded by `pulses` pulses.
pub fn relay_multiple(pulses: u64) -> f64 {
    (2 * pulses.div_ceil(2)) as f64
}

fn multiples(phases: &PhaseSeries) -> Result<Vec<f64>> {
    phases
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| l.map(|l| relay_multiple(l.pulses_before)).ok_or(Error::Unlabeled(phases.index[i])))
        .collect()
}

pub fn relay(phases: &PhaseSeries, theta0: f64) -> Result<PhaseSeries> {
    let k = multiples(phases)?;
    let mut out = phases.clone();
    for (s, k) in out.signal.iter_mut().zip(&k) {
        *s += k * theta0;
    }
    Ok(out)
}

/// Least-squares line `y = a + b t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub residual: f64,
    pub r_squared: f64,
}

pub fn fit_line(t: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = t.len().min(y.len());
    if n < 2 {
        return Err(Error::TooFewPoints { need: 2, have: n });
    }
    let nf = n as f64;
    let mt = t[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dt, dy) = (t[i] - mt, y[i] - my);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(Error::InvalidParameter("all sample times coincide".into()));
    }
    let slope = sty / stt;
    let residual = (syy - slope * sty).max(0.0);
    let r_squared = if syy > 0.0 { 1.0 - residual / syy } else { 1.0 };
    Ok(LineFit { intercept: my - slope * mt, slope, residual, r_squared })
}

/// Slope of the signal phase over the first quarter, times `tau`.
pub fn crude_theta0(phases: &PhaseSeries, tau: f64) -> Result<f64> {
    let (t, y): (Vec<f64>, Vec<f64>) = phases
        .labels
        .iter()
        .zip(phases.t.iter().zip(&phases.signal))
        .filter(|(l, _)| matches!(l, Some(l) if l.quarter_index == 0))
        .map(|(_, (t, y))| (*t, *y))
        .unzip();
    Ok(fit_line(&t, &y)?.slope * tau)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrmEstimate {
    pub theta0_crude: f64,
    pub theta0_refined: f64,
    /// Gauss
    pub b0_hat: f64,
    /// Single-run spread of `b0_hat` (Gauss).
    pub b0_std: f64,
    /// `b0_std / sqrt(runs)`
    pub b0_stderr: f64,
    /// Slope of the relayed line over `gamma` (Gauss).
    pub b0_line: f64,
    pub residual: f64,
    pub r_squared: f64,
    pub runs: usize,
    /// Refined `theta0` fell outside `[0.5, 1.5]` times the crude value.
    pub out_of_bracket: bool,
}

/// Removes the `[1, t]` component.
fn project_out_line(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|v| (v - mt).powi(2)).sum();
    let sty: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    t.iter().zip(y).map(|(a, b)| b - my - slope * (a - mt)).collect()
}

/// `theta0` minimizing the residual of a line fit to the relayed phases.
pub fn optimal_theta0(phases: &PhaseSeries) -> Result<f64> {
    let k = multiples(phases)?;
    if phases.len() < 3 {
        return Err(Error::TooFewPoints { need: 3, have: phases.len() });
    }
    let pk = project_out_line(&phases.t, &k);
    let pp = project_out_line(&phases.t, &phases.signal);
    let norm: f64 = pk.iter().map(|v| v * v).sum();
    if norm < 1e-300 {
        return Err(Error::InvalidParameter("relay multiples are collinear with time; need data over at least two quarters".into()));
    }
    Ok(-pk.iter().zip(&pp).map(|(a, b)| a * b).sum::<f64>() / norm)
}

/// Full estimate from the phases of `runs.len()` independent runs sharing
/// one schedule. The estimate uses the run-averaged phases; its spread comes
/// from the per-run optima, which average to the same value.
pub fn refine_theta0(runs: &[PhaseSeries], tau: f64, gamma: f64) -> Result<PrmEstimate> {
    let Some(first) = runs.first() else {
        return Err(Error::TooFewPoints { need: 1, have: 0 });
    };
    let mut mean = first.clone();
    for r in &runs[1..] {
        if r.t != first.t {
            return Err(Error::InvalidParameter("runs cover different samples".into()));
        }
        for (m, s) in mean.signal.iter_mut().zip(&r.signal) {
            *m += s;
        }
    }
    let m = runs.len() as f64;
    mean.signal.iter_mut().for_each(|s| *s /= m);

    let crude = crude_theta0(&mean, tau)?;
    let refined = optimal_theta0(&mean)?;
    let relayed = relay(&mean, refined)?;
    let line = fit_line(&relayed.t, &relayed.signal)?;

    let per_run = runs.iter().map(optimal_theta0).collect::<Result<Vec<_>>>()?;
    let spread = if runs.len() > 1 {
        let mu = per_run.iter().sum::<f64>() / m;
        (per_run.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let scale = 1.0 / (gamma * tau);
    let lo = 0.5 * crude.min(1.5 * crude);
    let hi = 1.5 * crude.max(0.5 * crude);
    let slack = 1e-12;
    Ok(PrmEstimate {
        theta0_crude: crude,
        theta0_refined: refined,
        b0_hat: refined * scale,
        b0_std: spread * scale,
        b0_stderr: spread * scale / m.sqrt(),
        b0_line: line.slope / gamma,
        residual: line.residual,
        r_squared: line.r_squared,
        runs: runs.len(),
        out_of_bracket: refined < lo - slack || refined > hi + slack,
    })
}

/// Relay residual at a trial `theta0`.
pub fn relay_residual(phases: &PhaseSeries, theta0: f64) -> Result<f64> {
    let r = relay(phases, theta0)?;
    Ok(fit_line(&r.t, &r.signal)?.residual)
}
