//! Monte Carlo over stray-field realizations.
//!
//! Realization `i` draws its stray field from stream `i` of the master
//! seed. Realizations run in parallel chunks; the reduction walks them in
//! index order, so results do not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ddsim::{run_realization_moments, walk_states, InitialMoments, RealizationSeries, Schedule};
use crate::error::{Error, Result};
use crate::fields::{sample_stray, FieldConfig, StrayField};
use crate::rng::RealizationStream;
use crate::spinalg::{make_operators, Axis, SpinState};

const CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Heisenberg propagation of first and second moments.
    #[default]
    Moments,
    /// Full state vector.
    StateVector,
}

#[derive(Clone, Debug)]
pub struct EnsembleOptions {
    pub realizations: usize,
    pub master_seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub engine: Engine,
    /// Replace exact moments by the sample mean of this many projective
    /// `Jy` outcomes per sample. Always runs on the state vector.
    pub finite_shots: Option<u32>,
    pub keep_realizations: bool,
}

impl EnsembleOptions {
    pub fn new(realizations: usize, master_seed: u64) -> Self {
        Self {
            realizations,
            master_seed,
            threads: None,
            engine: Engine::default(),
            finite_shots: None,
            keep_realizations: false,
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleSeries {
    pub t: Vec<f64>,
    pub mean_jx: Vec<f64>,
    pub std_jx: Vec<f64>,
    pub mean_jy: Vec<f64>,
    /// Sample standard deviation of `<Jy>` across realizations.
    pub std_jy: Vec<f64>,
    /// Mean over realizations of the quantum variance of `Jy`.
    pub var_q: Vec<f64>,
    /// Sample variance of `<Jy>` across realizations.
    pub var_c: Vec<f64>,
    pub stderr_var_q: Vec<f64>,
    pub stderr_var_c: Vec<f64>,
    pub realizations: usize,
    pub master_seed: u64,
    pub warnings: Vec<String>,
    pub kept: Option<Vec<RealizationSeries>>,
}

impl EnsembleSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn stderr_mean_jy(&self) -> Vec<f64> {
        let m = self.realizations as f64;
        self.std_jy.iter().map(|s| s / m.sqrt()).collect()
    }

    /// `sqrt(var_q + var_c)`, the spread a single shot would see.
    pub fn total_std_jy(&self) -> Vec<f64> {
        self.var_q.iter().zip(&self.var_c).map(|(q, c)| (q + c).sqrt()).collect()
    }

    /// Transverse length `sqrt(<Jx>^2 + <Jy>^2)` of the ensemble mean.
    pub fn mean_transverse(&self) -> Vec<f64> {
        self.mean_jx.iter().zip(&self.mean_jy).map(|(x, y)| x.hypot(*y)).collect()
    }
}

/// One pass accumulator in fixed order.
#[derive(Clone)]
struct Welford {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(len: usize) -> Self {
        Self { n: 0.0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, xs: &[f64]) {
        self.n += 1.0;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(xs) {
            let d = x - *m;
            *m += d / self.n;
            *s += d * (x - *m);
        }
    }

    fn sample_var(&self) -> Vec<f64> {
        let denom = (self.n - 1.0).max(1.0);
        self.m2.iter().map(|s| (s / denom).max(0.0)).collect()
    }
}

fn realization(
    index: usize,
    config: &FieldConfig,
    schedule: &Schedule,
    probe: &SpinState,
    init: &InitialMoments,
    opts: &EnsembleOptions,
) -> Result<RealizationSeries> {
    let mut stream = RealizationStream::new(opts.master_seed, index as u64);
    let seed = stream.seed_tag();
    let stray = sample_stray(config, &mut stream);
    let run = match (opts.finite_shots, opts.engine) {
        (Some(shots), _) => finite_shot_series(probe, schedule, config, &stray, shots, &mut stream),
        (None, Engine::Moments) => run_realization_moments(init, schedule, config, &stray),
        (None, Engine::StateVector) => crate::ddsim::run_realization_quiet(probe, schedule, config, &stray),
    };
    let mut series = run.map_err(|e| Error::Realization { index: index as u64, seed, source: Box::new(e) })?;
    series.seed = Some(seed);
    Ok(series)
}

/// Per sample: `<Jx>` exact, `<Jy>` and `<Jy^2>` from `shots` projective
/// outcomes. `Jy` is measured as `Jz` after `exp(-i pi/2 Jx)`.
fn finite_shot_series(
    probe: &SpinState,
    schedule: &Schedule,
    config: &FieldConfig,
    stray: &StrayField,
    shots: u32,
    stream: &mut RealizationStream,
) -> Result<RealizationSeries> {
    if shots == 0 {
        return Err(Error::InvalidParameter("finite_shots must be >= 1".into()));
    }
    let spin = probe.spin();
    let ops = make_operators(spin);
    let mut series = RealizationSeries {
        jx: Vec::new(),
        jy: Vec::new(),
        jy2: Vec::new(),
        stray: *stray,
        seed: None,
        warnings: Vec::new(),
    };
    let mut applied = vec![Default::default(); spin.dim()];
    walk_states(probe, schedule, config, stray, |_, psi| {
        ops.apply(Axis::X, psi.amplitudes(), &mut applied);
        let jx: f64 = psi.amplitudes().iter().zip(&applied).map(|(a, b)| (a.conj() * b).re).sum();
        let turned = psi.rotate(Axis::X, std::f64::consts::FRAC_PI_2)?;
        let mut cdf = Vec::with_capacity(spin.dim());
        let mut acc = 0.0;
        for c in turned.amplitudes() {
            acc += c.norm_sqr();
            cdf.push(acc);
        }
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..shots {
            let u = stream.uniform() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(spin.dim() - 1);
            let m = spin.m(k);
            s1 += m;
            s2 += m * m;
        }
        series.jx.push(jx);
        series.jy.push(s1 / shots as f64);
        series.jy2.push(s2 / shots as f64);
        Ok(())
    })?;
    Ok(series)
}

pub fn run_ensemble(
    config: &FieldConfig,
    schedule: &Schedule,
    probe: &SpinState,
    opts: &EnsembleOptions,
) -> Result<EnsembleSeries> {
    if opts.realizations == 0 {
        return Err(Error::InvalidParameter("need at least one realization".into()));
    }
    let mut warnings = config.validate()?;
    warnings.extend(schedule.magic_warning(config));
    for w in &warnings {
        log::warn!("{w}");
    }
    let init = InitialMoments::from_state(probe)?;
    match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            pool.install(|| reduce(config, schedule, probe, &init, opts, warnings))
        }
        None => reduce(config, schedule, probe, &init, opts, warnings),
    }
}

fn reduce(
    config: &FieldConfig,
    schedule: &Schedule,
    probe: &SpinState,
    init: &InitialMoments,
    opts: &EnsembleOptions,
    warnings: Vec<String>,
) -> Result<EnsembleSeries> {
    let n = schedule.samples.len();
    let m = opts.realizations;
    let mut jx = Welford::new(n);
    let mut vq = Welford::new(n);
    // <Jy> per realization, kept for the two-pass central moments.
    let mut jy_all: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut kept = opts.keep_realizations.then(Vec::new);

    let mut start = 0;
    while start < m {
        let end = (start + CHUNK).min(m);
        let chunk: Vec<RealizationSeries> = (start..end)
            .into_par_iter()
            .map(|i| realization(i, config, schedule, probe, init, opts))
            .collect::<Result<_>>()?;
        for r in chunk {
            jx.push(&r.jx);
            vq.push(&r.var_jy());
            if let Some(k) = kept.as_mut() {
                k.push(r.clone());
            }
            jy_all.push(r.jy);
        }
        start = end;
    }

    // Two-pass moments about the first realization.
    let mf = m as f64;
    let shift = jy_all[0].clone();
    let mut offset = vec![0.0; n];
    for row in &jy_all {
        for i in 0..n {
            offset[i] += row[i] - shift[i];
        }
    }
    offset.iter_mut().for_each(|a| *a /= mf);
    let mean_jy: Vec<f64> = shift.iter().zip(&offset).map(|(s, o)| s + o).collect();
    let mut m2 = vec![0.0; n];
    let mut m4 = vec![0.0; n];
    for row in &jy_all {
        for i in 0..n {
            let d = (row[i] - shift[i]) - offset[i];
            m2[i] += d * d;
            m4[i] += d * d * d * d;
        }
    }
    let var_c: Vec<f64> = m2.iter().map(|s| s / (mf - 1.0).max(1.0)).collect();
    // Var(s^2) ~ (mu4 - (M-3)/(M-1) sigma^4) / M
    let stderr_var_c = (0..n)
        .map(|i| {
            if m < 2 {
                return 0.0;
            }
            let mu4 = m4[i] / mf;
            let s2 = var_c[i];
            ((mu4 - (mf - 3.0) / (mf - 1.0) * s2 * s2) / mf).max(0.0).sqrt()
        })
        .collect();
    let stderr_var_q = vq.sample_var().iter().map(|v| (v / mf).sqrt()).collect();

    Ok(EnsembleSeries {
        t: schedule.times(),
        mean_jx: jx.mean.clone(),
        std_jx: jx.sample_var().iter().map(|v| v.sqrt()).collect(),
        std_jy: var_c.iter().map(|v| v.sqrt()).collect(),
        mean_jy,
        var_q: vq.mean.clone(),
        var_c,
        stderr_var_q,
        stderr_var_c,
        realizations: m,
        master_seed: opts.master_seed,
        warnings,
        kept,
    })
}
