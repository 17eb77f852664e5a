//! Probe states: coherent spin states and squeezed spin states with their
//! squeezing metrics.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinalg::chebyshev::{expm_apply, Tridiagonal};
use crate::spinalg::{make_operators, Axis, SpinMagnitude, SpinState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Css,
    Sss,
}

/// Squeezing generator applied to a +x coherent state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SqueezingMethod {
    /// `(Jy Jz + Jz Jy)/2`
    TwoAxis,
    /// `Jz^2 / 2`
    OneAxis,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSpec {
    pub kind: ProbeKind,
    /// Mean-spin direction for a coherent state. Squeezed states always
    /// point along +x.
    pub direction: [f64; 3],
    pub method: SqueezingMethod,
    /// Generator strength times time. `None` searches for minimal `xi2`.
    pub strength: Option<f64>,
    /// Stop at the weakest squeezing reaching this `xi2`.
    pub target_xi2: Option<f64>,
}

impl ProbeSpec {
    pub fn css() -> Self {
        Self {
            kind: ProbeKind::Css,
            direction: [1.0, 0.0, 0.0],
            method: SqueezingMethod::TwoAxis,
            strength: None,
            target_xi2: None,
        }
    }

    pub fn sss() -> Self {
        Self { kind: ProbeKind::Sss, ..Self::css() }
    }
}

/// Metrics of a probe whose mean spin is meant to lie along +x.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SqueezingMetrics {
    /// `2 min Var(J_perp) / J` over the y-z plane.
    pub xi2_s: f64,
    /// `|<Jx>| / J`
    pub lambda: f64,
    pub var_x0: f64,
    pub var_y0: f64,
    /// Angle from +y towards +z of the least-variance direction.
    pub min_angle: f64,
    /// False when the mean spin has no x component to speak of.
    pub valid: bool,
}

impl SqueezingMetrics {
    pub fn css() -> Self {
        Self { xi2_s: 1.0, lambda: 1.0, var_x0: 0.0, var_y0: 0.5, min_angle: 0.0, valid: true }
    }

    /// `Var(Jx)/Var(Jy)` of the initial state.
    pub fn variance_ratio(&self) -> f64 {
        self.var_x0 / self.var_y0
    }
}

fn normalize(v: [f64; 3]) -> Result<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroDirection);
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

/// Spin coherent state `Rz(phi) Ry(theta) |J, J>` pointing along `direction`.
pub fn prepare_css(spin: SpinMagnitude, direction: [f64; 3]) -> Result<SpinState> {
    let n = normalize(direction)?;
    let polar = n[2].clamp(-1.0, 1.0).acos();
    let azimuth = n[1].atan2(n[0]);
    let two_j = spin.twice() as usize;
    let (c, s) = ((polar / 2.0).cos(), (polar / 2.0).sin());
    let (ln_c, ln_s) = (c.ln(), s.ln());
    let mut ln_binom = 0.0f64;
    let mut amps = Vec::with_capacity(two_j + 1);
    for k in 0..=two_j {
        if k > 0 {
            ln_binom += ((two_j - k + 1) as f64).ln() - (k as f64).ln();
        }
        // d^J_{m,J}(polar) = sqrt(C(2J, k)) cos^{2J-k} sin^k, k = J - m
        let cos_pow = (two_j - k) as f64;
        let sin_pow = k as f64;
        let mag = if (cos_pow > 0.0 && c == 0.0) || (sin_pow > 0.0 && s == 0.0) {
            0.0
        } else {
            let mut ln = 0.5 * ln_binom;
            if cos_pow > 0.0 {
                ln += cos_pow * ln_c;
            }
            if sin_pow > 0.0 {
                ln += sin_pow * ln_s;
            }
            ln.exp()
        };
        amps.push(C64::from_polar(mag, -azimuth * spin.m(k)));
    }
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|a| *a /= norm);
    SpinState::from_amplitudes(spin, amps)
}

pub fn squeezing_metrics(state: &SpinState) -> Result<SqueezingMetrics> {
    state.check_normalized()?;
    let j = state.spin().j();
    let (mean, g) = state.moments();
    let var = |a: usize| (g[a][a].re - mean[a] * mean[a]).max(0.0);
    let (vyy, vzz) = (var(1), var(2));
    let cyz = g[1][2].re - mean[1] * mean[2];
    let half_sum = 0.5 * (vyy + vzz);
    let half_diff = 0.5 * (vyy - vzz);
    let min_var = (half_sum - (half_diff * half_diff + cyz * cyz).sqrt()).max(0.0);
    // eigenvector of the smaller eigenvalue of [[vyy, cyz], [cyz, vzz]]
    let min_angle = 0.5 * (-2.0 * cyz).atan2(vzz - vyy);
    let lambda = mean[0].abs() / j;
    Ok(SqueezingMetrics {
        xi2_s: 2.0 * min_var / j,
        lambda,
        var_x0: var(0),
        var_y0: vyy,
        min_angle,
        valid: lambda > 1e-9,
    })
}

fn generator(spin: SpinMagnitude, method: SqueezingMethod) -> Tridiagonal {
    let ops = make_operators(spin);
    let d = spin.dim();
    match method {
        SqueezingMethod::TwoAxis => {
            // (Jy Jz + Jz Jy)_{k,k+1} = Jy_{k,k+1} (m_k + m_{k+1})
            let upper = (0..d - 1)
                .map(|k| C64::new(0.0, -0.5 * ops.ladder[k]) * (0.5 * (ops.jz[k] + ops.jz[k + 1])))
                .collect();
            Tridiagonal::new(vec![0.0; d], upper)
        }
        SqueezingMethod::OneAxis => Tridiagonal::new(
            ops.jz.iter().map(|m| 0.5 * m * m).collect(),
            vec![C64::new(0.0, 0.0); d - 1],
        ),
    }
}

fn twist(state: &SpinState, gen: &Tridiagonal, amount: f64) -> Result<SpinState> {
    if amount == 0.0 {
        return Ok(state.clone());
    }
    let amps = expm_apply(gen, amount, state.amplitudes(), None)?;
    SpinState::from_amplitudes(state.spin(), amps)
}

/// Rotates about x so that the least-variance direction lands on +y.
fn align(state: &SpinState) -> Result<(SpinState, SqueezingMetrics)> {
    let m = squeezing_metrics(state)?;
    let aligned = if m.min_angle.abs() > 0.0 { state.rotate(Axis::X, -m.min_angle)? } else { state.clone() };
    let metrics = squeezing_metrics(&aligned)?;
    Ok((aligned, metrics))
}

fn default_search_limit(spin: SpinMagnitude, method: SqueezingMethod) -> f64 {
    let j = spin.j();
    match method {
        SqueezingMethod::TwoAxis => 1.5 * ((2.0 * j + 2.0).ln() + 2.0) / j,
        SqueezingMethod::OneAxis => 6.0 * (2.0 * j).powf(-2.0 / 3.0),
    }
}

const SEARCH_STEPS: usize = 120;

/// Twisted +x coherent state, rotated about x so its least-variance axis is
/// y. Without an explicit strength the twisting amount minimizing `xi2` is
/// found by a grid scan refined with golden-section search.
pub fn prepare_sss(spin: SpinMagnitude, spec: &ProbeSpec) -> Result<(SpinState, SqueezingMetrics)> {
    let css = prepare_css(spin, [1.0, 0.0, 0.0])?;
    let gen = generator(spin, spec.method);
    if let Some(amount) = spec.strength {
        if !amount.is_finite() || amount < 0.0 {
            return Err(Error::InvalidParameter(format!("twisting strength {amount} must be >= 0")));
        }
        let twisted = twist(&css, &gen, amount)?;
        let (state, metrics) = align(&twisted)?;
        if let Some(target) = spec.target_xi2 {
            if metrics.xi2_s > target * (1.0 + 1e-3) {
                return Err(Error::SqueezingTarget { target, achieved: metrics.xi2_s });
            }
        }
        return Ok((state, metrics));
    }

    let limit = default_search_limit(spin, spec.method);
    let step = limit / SEARCH_STEPS as f64;
    let xi2 = |s: &SpinState| squeezing_metrics(s).map(|m| m.xi2_s);

    let mut states = Vec::with_capacity(SEARCH_STEPS + 1);
    let mut values = Vec::with_capacity(SEARCH_STEPS + 1);
    states.push(css.clone());
    values.push(xi2(&css)?);
    for i in 1..=SEARCH_STEPS {
        let next = twist(&states[i - 1], &gen, step)?;
        values.push(xi2(&next)?);
        states.push(next);
    }

    if let Some(target) = spec.target_xi2 {
        let Some(hit) = values.iter().position(|&v| v <= target) else {
            let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
            return Err(Error::SqueezingTarget { target, achieved: best });
        };
        if hit == 0 {
            return align(&css);
        }
        // bisection on [hit-1, hit]; xi2 decreases through the interval
        let base = &states[hit - 1];
        let (mut lo, mut hi) = (0.0, step);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if xi2(&twist(base, &gen, mid)?)? <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return align(&twist(base, &gen, hi)?);
    }

    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if best == 0 {
        return align(&css);
    }
    let base = &states[best - 1];
    let width = if best == SEARCH_STEPS { step } else { 2.0 * step };
    let eval = |x: f64| -> Result<f64> { xi2(&twist(base, &gen, x)?) };
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, width);
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    while (b - a) > 1e-9 * limit {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = eval(d)?;
        }
    }
    align(&twist(base, &gen, 0.5 * (a + b))?)
}

/// Dispatches on the probe kind.
pub fn prepare(spin: SpinMagnitude, spec: &ProbeSpec) -> Result<(SpinState, SqueezingMetrics)> {
    match spec.kind {
        ProbeKind::Css => {
            let state = prepare_css(spin, spec.direction)?;
            let metrics = squeezing_metrics(&state)?;
            Ok((state, metrics))
        }
        ProbeKind::Sss => prepare_sss(spin, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinalg::{expectation, variance};

    fn spin(j: f64) -> SpinMagnitude {
        SpinMagnitude::new(j).unwrap()
    }

    #[test]
    fn css_basis_and_moments() {
        let up = prepare_css(spin(4.0), [0.0, 0.0, 2.0]).unwrap();
        assert_eq!(up, SpinState::basis(spin(4.0), 0));
        let x = prepare_css(spin(50.0), [1.0, 0.0, 0.0]).unwrap();
        assert!((expectation(&x, Axis::X).unwrap() - 50.0).abs() < 1e-10);
        assert!((variance(&x, Axis::Y).unwrap() - 25.0).abs() < 1e-9);
        let half = prepare_css(spin(0.5), [1.0, 0.0, 0.0]).unwrap();
        let r = 1.0 / 2f64.sqrt();
        for a in half.amplitudes() {
            assert!((a - C64::new(r, 0.0)).norm() < 1e-15);
        }
        assert!(matches!(prepare_css(spin(1.0), [0.0; 3]), Err(Error::ZeroDirection)));
    }

    #[test]
    fn css_points_along_arbitrary_direction() {
        let n = [0.3, -0.5, -0.8];
        let norm = (0.09f64 + 0.25 + 0.64).sqrt();
        let s = prepare_css(spin(17.5), n).unwrap();
        let along: f64 = Axis::ALL
            .iter()
            .map(|&a| expectation(&s, a).unwrap() * n[a.index()] / norm)
            .sum();
        assert!((along - 17.5).abs() < 1e-9);
        let low = prepare_css(spin(3.0), [0.0, 0.0, -1.0]).unwrap();
        assert!((low.amplitudes()[6].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn css_metrics() {
        for &j in &[0.5, 3.0, 40.0, 250.0] {
            let m = squeezing_metrics(&prepare_css(spin(j), [1.0, 0.0, 0.0]).unwrap()).unwrap();
            assert!((m.xi2_s - 1.0).abs() < 1e-10, "J={j}");
            assert!((m.lambda - 1.0).abs() < 1e-10);
            assert!((m.var_y0 - j / 2.0).abs() < 1e-8);
            assert!(m.var_x0.abs() < 1e-8);
            assert!(m.valid);
        }
        let z = squeezing_metrics(&SpinState::basis(spin(5.0), 0)).unwrap();
        assert_eq!(z.lambda, 0.0);
        assert!(!z.valid);
    }

    #[test]
    fn zero_twist_is_css() {
        let spec = ProbeSpec { strength: Some(0.0), ..ProbeSpec::sss() };
        let (_, m) = prepare_sss(spin(30.0), &spec).unwrap();
        assert!((m.xi2_s - 1.0).abs() < 1e-10);
        assert!((m.lambda - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_axis_squeezing_at_j100() {
        let (state, m) = prepare_sss(spin(100.0), &ProbeSpec::sss()).unwrap();
        assert!(m.xi2_s < 0.02, "{m:?}");
        // mean spin along +x
        assert!(expectation(&state, Axis::Y).unwrap().abs() < 1e-6 * 100.0);
        assert!(expectation(&state, Axis::Z).unwrap().abs() < 1e-6 * 100.0);
        assert!(expectation(&state, Axis::X).unwrap() > 0.0);
        // least variance along y
        assert!(m.min_angle.abs() < 1e-3, "{}", m.min_angle);
        let vy = variance(&state, Axis::Y).unwrap();
        assert!((m.xi2_s * 100.0 / 2.0 - vy).abs() < 1e-10);
        assert!((m.lambda - expectation(&state, Axis::X).unwrap() / 100.0).abs() < 1e-10);
    }

    #[test]
    fn min_variance_matches_brute_force_scan() {
        let spec = ProbeSpec { method: SqueezingMethod::OneAxis, ..ProbeSpec::sss() };
        let s = spin(40.0);
        let (state, m) = prepare_sss(s, &spec).unwrap();
        // undo the alignment partially so the optimum is off-axis
        let tilted = state.rotate(Axis::X, 0.37).unwrap();
        let tm = squeezing_metrics(&tilted).unwrap();
        let ops = make_operators(s);
        let d = s.dim();
        let mut jy = vec![C64::new(0.0, 0.0); d];
        let mut jz = vec![C64::new(0.0, 0.0); d];
        ops.apply(Axis::Y, tilted.amplitudes(), &mut jy);
        ops.apply(Axis::Z, tilted.amplitudes(), &mut jz);
        let mut best = f64::INFINITY;
        let steps = (std::f64::consts::PI / 1e-4) as usize;
        for i in 0..=steps {
            let th = i as f64 * 1e-4;
            let (c, sn) = (th.cos(), th.sin());
            let mean: f64 = tilted
                .amplitudes()
                .iter()
                .zip(jy.iter().zip(&jz))
                .map(|(a, (y, z))| (a.conj() * (y * c + z * sn)).re)
                .sum();
            let second: f64 = jy.iter().zip(&jz).map(|(y, z)| (y * c + z * sn).norm_sqr()).sum();
            best = best.min(second - mean * mean);
        }
        assert!((tm.xi2_s * 40.0 / 2.0 - best).abs() < 1e-8, "{} vs {best}", tm.xi2_s * 20.0);
        assert!((tm.xi2_s - m.xi2_s).abs() < 1e-10);
    }

    #[test]
    fn squeezing_improves_with_size() {
        let mut last = 1.0;
        for &j in &[20.0, 50.0, 100.0, 200.0] {
            let (_, m) = prepare_sss(spin(j), &ProbeSpec::sss()).unwrap();
            assert!(m.xi2_s < last, "J={j}: {} !< {last}", m.xi2_s);
            assert!(m.lambda <= 1.0);
            last = m.xi2_s;
        }
    }

    #[test]
    fn target_xi2() {
        let spec = ProbeSpec { target_xi2: Some(0.2), ..ProbeSpec::sss() };
        let (_, m) = prepare_sss(spin(50.0), &spec).unwrap();
        assert!((m.xi2_s - 0.2).abs() < 1e-6, "{}", m.xi2_s);
        let impossible = ProbeSpec { target_xi2: Some(1e-6), ..ProbeSpec::sss() };
        assert!(matches!(prepare_sss(spin(50.0), &impossible), Err(Error::SqueezingTarget { .. })));
    }
}
