//! Collective spin-J algebra in the `|J, m>` basis.
//!
//! Amplitudes are stored with `m` running from `J` down to `-J`, so index
//! `k` holds `m = J - k`. All spin operators are tridiagonal in this basis.

pub mod chebyshev;

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use chebyshev::{expm_apply, Tridiagonal};

/// Normalization slack accepted on input states.
pub const NORM_TOLERANCE: f64 = 1e-9;
/// Largest norm drift tolerated after a propagation step.
pub const PROPAGATION_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Spin magnitude `J`, stored as the integer `2J`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpinMagnitude {
    twice: u32,
}

impl SpinMagnitude {
    pub fn from_twice(twice: u32) -> Result<Self> {
        if twice == 0 {
            return Err(Error::InvalidSpin(0.0));
        }
        Ok(Self { twice })
    }

    pub fn new(j: f64) -> Result<Self> {
        let twice = 2.0 * j;
        if !twice.is_finite() || twice < 1.0 || (twice - twice.round()).abs() > 1e-12 {
            return Err(Error::InvalidSpin(j));
        }
        Self::from_twice(twice.round() as u32)
    }

    pub fn j(self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn twice(self) -> u32 {
        self.twice
    }

    pub fn dim(self) -> usize {
        self.twice as usize + 1
    }

    /// `J(J+1)`
    pub fn casimir(self) -> f64 {
        let j = self.j();
        j * (j + 1.0)
    }

    pub fn m(self, k: usize) -> f64 {
        self.j() - k as f64
    }
}

impl fmt::Display for SpinMagnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice % 2 == 0 {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

/// `Jx`, `Jy`, `Jz` for one multiplet.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub spin: SpinMagnitude,
    /// Diagonal of `Jz`.
    pub jz: Vec<f64>,
    /// `<m|J+|m-1>` between index `k` and `k+1`.
    pub ladder: Vec<f64>,
}

pub fn make_operators(spin: SpinMagnitude) -> SpinOperators {
    let d = spin.dim();
    let jz = (0..d).map(|k| spin.m(k)).collect();
    let cas = spin.casimir();
    let ladder = (0..d - 1)
        .map(|k| {
            let m = spin.m(k);
            (cas - m * (m - 1.0)).max(0.0).sqrt()
        })
        .collect();
    SpinOperators { spin, jz, ladder }
}

impl SpinOperators {
    pub fn tridiagonal(&self, axis: Axis) -> Tridiagonal {
        let d = self.jz.len();
        match axis {
            Axis::X => Tridiagonal::new(
                vec![0.0; d],
                self.ladder.iter().map(|c| C64::new(0.5 * c, 0.0)).collect(),
            ),
            Axis::Y => Tridiagonal::new(
                vec![0.0; d],
                self.ladder.iter().map(|c| C64::new(0.0, -0.5 * c)).collect(),
            ),
            Axis::Z => Tridiagonal::new(self.jz.clone(), vec![C64::new(0.0, 0.0); d - 1]),
        }
    }

    /// `out = J_axis v`
    pub fn apply(&self, axis: Axis, v: &[C64], out: &mut [C64]) {
        let d = self.jz.len();
        match axis {
            Axis::Z => {
                for k in 0..d {
                    out[k] = v[k] * self.jz[k];
                }
            }
            Axis::X | Axis::Y => {
                // J+ raises m, i.e. lowers the index.
                let sign = if axis == Axis::X { 1.0 } else { -1.0 };
                for k in 0..d {
                    let plus = if k + 1 < d { v[k + 1] * self.ladder[k] } else { C64::new(0.0, 0.0) };
                    let minus = if k > 0 { v[k - 1] * self.ladder[k - 1] } else { C64::new(0.0, 0.0) };
                    let sum = plus + minus * sign;
                    out[k] = if axis == Axis::X {
                        sum * 0.5
                    } else {
                        sum * C64::new(0.0, -0.5)
                    };
                }
            }
        }
    }

    /// Dense matrix, row-major. Only meant for small `J`.
    pub fn dense(&self, axis: Axis) -> Vec<Vec<C64>> {
        let d = self.jz.len();
        let mut out = vec![vec![C64::new(0.0, 0.0); d]; d];
        let mut e = vec![C64::new(0.0, 0.0); d];
        let mut col = vec![C64::new(0.0, 0.0); d];
        for j in 0..d {
            e.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
            e[j] = C64::new(1.0, 0.0);
            self.apply(axis, &e, &mut col);
            for i in 0..d {
                out[i][j] = col[i];
            }
        }
        out
    }
}

/// Pure state of the collective spin.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinState {
    spin: SpinMagnitude,
    amps: Vec<C64>,
}

impl SpinState {
    pub fn from_amplitudes(spin: SpinMagnitude, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != spin.dim() {
            return Err(Error::Dimension { expected: spin.dim(), got: amps.len() });
        }
        let s = Self { spin, amps };
        s.check_normalized()?;
        Ok(s)
    }

    /// `|J, m>` with `m = J - k`.
    pub fn basis(spin: SpinMagnitude, k: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); spin.dim()];
        amps[k] = C64::new(1.0, 0.0);
        Self { spin, amps }
    }

    #[cfg(test)]
    pub(crate) fn from_raw(spin: SpinMagnitude, amps: Vec<C64>) -> Self {
        Self { spin, amps }
    }

    pub fn spin(&self) -> SpinMagnitude {
        self.spin
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn check_normalized(&self) -> Result<()> {
        let dev = (self.norm() - 1.0).abs();
        if dev > NORM_TOLERANCE || !dev.is_finite() {
            return Err(Error::NotNormalized(dev));
        }
        Ok(())
    }

    pub fn overlap(&self, other: &SpinState) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// `|<self|other>|^2`
    pub fn fidelity(&self, other: &SpinState) -> f64 {
        self.overlap(other).norm_sqr()
    }

    /// Distance to `other` after removing the optimal global phase,
    /// `min_a || other - e^{ia} self ||`. Stays accurate where `1 - F` would
    /// underflow into rounding noise.
    pub fn phase_distance(&self, other: &SpinState) -> f64 {
        let ov = self.overlap(other);
        let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { C64::new(1.0, 0.0) };
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (b - a * phase).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Rotation `exp(-i angle Jz)`, exact.
    pub fn rotate_z(&self, angle: f64) -> SpinState {
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(k, c)| c * C64::from_polar(1.0, -angle * self.spin.m(k)))
            .collect();
        Self { spin: self.spin, amps }
    }

    /// Rotation `exp(-i angle J_axis)`.
    pub fn rotate(&self, axis: Axis, angle: f64) -> Result<SpinState> {
        if axis == Axis::Z {
            return Ok(self.rotate_z(angle));
        }
        let ops = make_operators(self.spin);
        let j = self.spin.j();
        let amps = expm_apply(&ops.tridiagonal(axis), angle, &self.amps, Some((-j, j)))?;
        Ok(Self { spin: self.spin, amps })
    }

    /// Returns `(<J>, G)` with `G[a][b] = <J_a J_b>`.
    pub fn moments(&self) -> ([f64; 3], [[C64; 3]; 3]) {
        let ops = make_operators(self.spin);
        let d = self.spin.dim();
        let mut applied = [
            vec![C64::new(0.0, 0.0); d],
            vec![C64::new(0.0, 0.0); d],
            vec![C64::new(0.0, 0.0); d],
        ];
        for axis in Axis::ALL {
            ops.apply(axis, &self.amps, &mut applied[axis.index()]);
        }
        let dot = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
        let mut mean = [0.0; 3];
        let mut g = [[C64::new(0.0, 0.0); 3]; 3];
        for a in 0..3 {
            mean[a] = dot(&self.amps, &applied[a]).re;
            for b in 0..3 {
                g[a][b] = dot(&applied[a], &applied[b]);
            }
        }
        (mean, g)
    }
}

fn apply_axis(state: &SpinState, axis: Axis) -> Vec<C64> {
    let ops = make_operators(state.spin);
    let mut out = vec![C64::new(0.0, 0.0); state.spin.dim()];
    ops.apply(axis, &state.amps, &mut out);
    out
}

/// `<psi|J_axis|psi>`
pub fn expectation(state: &SpinState, axis: Axis) -> Result<f64> {
    state.check_normalized()?;
    let applied = apply_axis(state, axis);
    Ok(state.amps.iter().zip(&applied).map(|(a, b)| (a.conj() * b).re).sum())
}

/// `<psi|J_axis^2|psi>`
pub fn second_moment(state: &SpinState, axis: Axis) -> Result<f64> {
    state.check_normalized()?;
    Ok(apply_axis(state, axis).iter().map(|c| c.norm_sqr()).sum())
}

pub fn variance(state: &SpinState, axis: Axis) -> Result<f64> {
    let mean = expectation(state, axis)?;
    let second = second_moment(state, axis)?;
    Ok((second - mean * mean).max(0.0))
}

/// Ideal instantaneous pulse `exp(-i pi Jx)`, which maps `|J, m>` to
/// `e^{-i pi J} |J, -m>`.
pub fn apply_pi_pulse_x(state: &SpinState) -> Result<SpinState> {
    state.check_normalized()?;
    let phase = C64::from_polar(1.0, -PI * state.spin.j());
    let amps = state.amps.iter().rev().map(|c| c * phase).collect();
    Ok(SpinState { spin: state.spin, amps })
}

/// Free evolution for `dt` seconds under `H = -c2p J^2 + gamma B.J` with `B`
/// in Gauss.
///
/// The Zeeman part is a rotation by `gamma |B| dt` about `n = B/|B|`. It is
/// factored as `W Rz(theta) W^-1` with `W = Rz(phi) Ry(polar)`; the z turns
/// are exact phases and only the tilt `Ry` needs the Chebyshev series, whose
/// length grows with `polar * J`. The axis is flipped into the upper
/// hemisphere first so the tilt never exceeds `pi/2`. The `J^2` term is a
/// global phase on the multiplet.
pub fn evolve_segment(
    state: &SpinState,
    field: [f64; 3],
    gamma: f64,
    c2p: f64,
    dt: f64,
) -> Result<SpinState> {
    if dt < 0.0 || dt.is_nan() {
        return Err(Error::NegativeDuration(dt));
    }
    if field.iter().any(|b| !b.is_finite()) || !gamma.is_finite() || !c2p.is_finite() {
        return Err(Error::NonFiniteField);
    }
    state.check_normalized()?;
    let spin = state.spin;
    let casimir_phase = C64::from_polar(1.0, c2p * spin.casimir() * dt);

    let magnitude = (field[0] * field[0] + field[1] * field[1] + field[2] * field[2]).sqrt();
    let mut theta = gamma * magnitude * dt;
    if magnitude == 0.0 || theta == 0.0 {
        let amps = state.amps.iter().map(|c| c * casimir_phase).collect();
        return Ok(SpinState { spin, amps });
    }
    let mut n = [field[0] / magnitude, field[1] / magnitude, field[2] / magnitude];
    if n[2] < 0.0 {
        n = [-n[0], -n[1], -n[2]];
        theta = -theta;
    }
    let polar = n[2].clamp(-1.0, 1.0).acos();
    let azimuth = n[1].atan2(n[0]);

    let mut psi = state.rotate_z(-azimuth);
    let tilted = polar * spin.j() > 1e-17;
    if tilted {
        psi = psi.rotate(Axis::Y, -polar)?;
    }
    psi = psi.rotate_z(theta);
    if tilted {
        psi = psi.rotate(Axis::Y, polar)?;
    }
    psi = psi.rotate_z(azimuth);
    psi.amps.iter_mut().for_each(|c| *c *= casimir_phase);

    let drift = (psi.norm() - 1.0).abs();
    if drift > PROPAGATION_TOLERANCE {
        return Err(Error::Propagation(format!("norm drift {drift:.3e} exceeds tolerance")));
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spin(j: f64) -> SpinMagnitude {
        SpinMagnitude::new(j).unwrap()
    }

    fn matmul(a: &[Vec<C64>], b: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let n = a.len();
        let mut out = vec![vec![C64::new(0.0, 0.0); n]; n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    fn x_eigenstate(j: f64) -> SpinState {
        // +x coherent state through the closed-form binomial amplitudes
        let s = spin(j);
        let n = s.twice() as usize;
        let mut amps = Vec::with_capacity(n + 1);
        let mut binom = 1.0f64;
        for k in 0..=n {
            if k > 0 {
                binom *= (n - k + 1) as f64 / k as f64;
            }
            amps.push(C64::new((binom / 2f64.powi(n as i32)).sqrt(), 0.0));
        }
        SpinState::from_amplitudes(s, amps).unwrap()
    }

    #[test]
    fn rejects_bad_spin() {
        assert!(SpinMagnitude::new(0.0).is_err());
        assert!(SpinMagnitude::new(0.3).is_err());
        assert!(SpinMagnitude::new(-1.0).is_err());
        assert_eq!(SpinMagnitude::new(1.5).unwrap().dim(), 4);
        assert_eq!(format!("{}", spin(2.5)), "5/2");
    }

    #[test]
    fn spin_half_is_pauli_over_two() {
        let ops = make_operators(spin(0.5));
        let x = ops.dense(Axis::X);
        let y = ops.dense(Axis::Y);
        let z = ops.dense(Axis::Z);
        let h = C64::new(0.5, 0.0);
        assert_eq!(x, vec![vec![C64::new(0.0, 0.0), h], vec![h, C64::new(0.0, 0.0)]]);
        assert_eq!(y[0][1], C64::new(0.0, -0.5));
        assert_eq!(y[1][0], C64::new(0.0, 0.5));
        assert_eq!(z[0][0], h);
        assert_eq!(z[1][1], -h);
    }

    #[test]
    fn spin_one_ladder() {
        let ops = make_operators(spin(1.0));
        assert_eq!(ops.jz, vec![1.0, 0.0, -1.0]);
        let x = ops.dense(Axis::X);
        let r = 1.0 / 2f64.sqrt();
        assert!((x[0][1].re - r).abs() < 1e-15);
        assert!((x[1][2].re - r).abs() < 1e-15);
        assert_eq!(x[0][2], C64::new(0.0, 0.0));
    }

    #[test]
    fn commutator_and_casimir() {
        for &j in &[0.5, 1.0, 3.5, 100.0] {
            let ops = make_operators(spin(j));
            let (x, y, z) = (ops.dense(Axis::X), ops.dense(Axis::Y), ops.dense(Axis::Z));
            let xy = matmul(&x, &y);
            let yx = matmul(&y, &x);
            let d = x.len();
            let mut worst = 0.0f64;
            let mut cas = 0.0f64;
            let xx = matmul(&x, &x);
            let yy = matmul(&y, &y);
            let zz = matmul(&z, &z);
            for a in 0..d {
                for b in 0..d {
                    let c = xy[a][b] - yx[a][b] - C64::new(0.0, 1.0) * z[a][b];
                    worst = worst.max(c.norm());
                    let expect = if a == b { j * (j + 1.0) } else { 0.0 };
                    cas = cas.max((xx[a][b] + yy[a][b] + zz[a][b] - expect).norm());
                    // Hermiticity
                    assert_eq!(x[a][b], x[b][a].conj());
                    assert_eq!(y[a][b], y[b][a].conj());
                }
            }
            assert!(worst < 1e-10, "J={j}: {worst}");
            assert!(cas < 1e-10, "J={j}: {cas}");
        }
    }

    #[test]
    fn css_moments() {
        let psi = x_eigenstate(50.0);
        assert!((expectation(&psi, Axis::X).unwrap() - 50.0).abs() < 1e-10);
        assert!(expectation(&psi, Axis::Y).unwrap().abs() < 1e-10);
        assert!((variance(&psi, Axis::Y).unwrap() - 25.0).abs() < 1e-9);
        let turned = psi.rotate_z(PI / 2.0);
        assert!((expectation(&turned, Axis::Y).unwrap() - 50.0).abs() < 1e-9);
        let eig = SpinState::basis(spin(7.0), 3);
        assert!(variance(&eig, Axis::Z).unwrap().abs() < 1e-12);
    }

    #[test]
    fn unnormalized_rejected() {
        let s = spin(1.0);
        let st = SpinState::from_raw(s, vec![C64::new(1.0, 0.0); 3]);
        assert!(matches!(expectation(&st, Axis::X), Err(Error::NotNormalized(_))));
        assert!(SpinState::from_amplitudes(s, vec![C64::new(1.0, 0.0); 2]).is_err());
    }

    #[test]
    fn pi_pulse_matches_dense_exponential() {
        for &j in &[0.5, 1.0, 1.5, 2.0, 2.5, 6.0] {
            let s = spin(j);
            for k in 0..s.dim() {
                let psi = SpinState::basis(s, k);
                let fast = apply_pi_pulse_x(&psi).unwrap();
                let slow = psi.rotate(Axis::X, PI).unwrap();
                let err: f64 = fast
                    .amplitudes()
                    .iter()
                    .zip(slow.amplitudes())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                assert!(err < 1e-12, "J={j} k={k} err={err}");
            }
        }
        // |up> -> |down> up to phase
        let up = SpinState::basis(spin(0.5), 0);
        let down = apply_pi_pulse_x(&up).unwrap();
        assert!((down.amplitudes()[1].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pi_pulse_flips_transverse_moments() {
        let psi = x_eigenstate(10.0).rotate_z(0.4).rotate(Axis::X, 0.3).unwrap();
        let flipped = apply_pi_pulse_x(&psi).unwrap();
        for (axis, sign) in [(Axis::X, 1.0), (Axis::Y, -1.0), (Axis::Z, -1.0)] {
            let a = expectation(&psi, axis).unwrap();
            let b = expectation(&flipped, axis).unwrap();
            assert!((b - sign * a).abs() < 1e-10);
        }
        let css = x_eigenstate(10.0);
        assert!((apply_pi_pulse_x(&css).unwrap().fidelity(&css) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn full_larmor_turn_is_identity() {
        let gamma = 2.0 * PI * 0.70e6;
        let b = 0.0143;
        let dt = 2.0 * PI / (gamma * b);
        let psi = x_eigenstate(20.0);
        let out = evolve_segment(&psi, [0.0, 0.0, b], gamma, 0.0, dt).unwrap();
        assert!((out.fidelity(&psi) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn signal_precession_gives_sine() {
        let gamma = 2.0 * PI * 0.70e6;
        let b0 = 1.6e-4;
        let psi = x_eigenstate(30.0);
        for &t in &[1e-5, 1e-4, 1.7e-3] {
            let out = evolve_segment(&psi, [0.0, 0.0, b0], gamma, 0.0, t).unwrap();
            let jy = expectation(&out, Axis::Y).unwrap();
            assert!((jy - 30.0 * (gamma * b0 * t).sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn spin_half_matches_axis_angle_formula() {
        let gamma: f64 = 1.3;
        let fields: [[f64; 3]; 4] = [[0.3, -0.2, 0.9], [0.0, 1.0, 0.0], [-0.5, 0.1, -0.7], [1.0, 0.0, 0.0]];
        let s = spin(0.5);
        let start = SpinState::from_amplitudes(
            s,
            vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)],
        )
        .unwrap();
        for f in fields {
            let dt = 2.2;
            let bmag = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
            let th = gamma * bmag * dt;
            let n = [f[0] / bmag, f[1] / bmag, f[2] / bmag];
            let (c, sn) = ((th / 2.0).cos(), (th / 2.0).sin());
            // cos(th/2) I - i sin(th/2) n.sigma
            let i = C64::new(0.0, 1.0);
            let u00 = C64::new(c, 0.0) - i * sn * n[2];
            let u11 = C64::new(c, 0.0) + i * sn * n[2];
            let u01 = -i * sn * C64::new(n[0], -n[1]);
            let u10 = -i * sn * C64::new(n[0], n[1]);
            let a = start.amplitudes();
            let expect = [u00 * a[0] + u01 * a[1], u10 * a[0] + u11 * a[1]];
            let got = evolve_segment(&start, f, gamma, 0.0, dt).unwrap();
            for k in 0..2 {
                assert!((got.amplitudes()[k] - expect[k]).norm() < 1e-12, "{f:?}");
            }
        }
    }

    #[test]
    fn evolve_rejects_bad_input() {
        let psi = x_eigenstate(1.0);
        assert!(matches!(
            evolve_segment(&psi, [0.0, 0.0, 1.0], 1.0, 0.0, -1.0),
            Err(Error::NegativeDuration(_))
        ));
        assert!(matches!(
            evolve_segment(&psi, [f64::NAN, 0.0, 1.0], 1.0, 0.0, 1.0),
            Err(Error::NonFiniteField)
        ));
    }

    #[test]
    fn composition_and_casimir_phase() {
        let psi = x_eigenstate(12.0);
        let f = [2e-4, -1e-4, 0.0143];
        let g = 2.0 * PI * 0.70e6;
        let a = evolve_segment(&psi, f, g, 0.0, 3e-5).unwrap();
        let ab = evolve_segment(&a, f, g, 0.0, 4.5e-5).unwrap();
        let direct = evolve_segment(&psi, f, g, 0.0, 7.5e-5).unwrap();
        assert!(ab.phase_distance(&direct) < 1e-10);
        let with_c2 = evolve_segment(&psi, f, g, 3.7e3, 7.5e-5).unwrap();
        for axis in Axis::ALL {
            let d = expectation(&direct, axis).unwrap() - expectation(&with_c2, axis).unwrap();
            assert!(d.abs() < 1e-10);
        }
        assert!((second_moment(&direct, Axis::Y).unwrap() - second_moment(&with_c2, Axis::Y).unwrap()).abs() < 1e-10);
    }
}
