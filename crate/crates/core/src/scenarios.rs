//! End-to-end runs behind the command line: time series, estimation,
//! sensitivity curves, noise sweeps, the dephasing check and the
//! self-validation suite. Each writes CSV files into an output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::ddsim::{build_schedule, walk_states, InitialMoments, Schedule, SequenceKind};
use crate::ensemble::{run_ensemble, EnsembleOptions, EnsembleSeries};
use crate::error::{Error, Result};
use crate::fields::{FieldConfig, NoiseModel, StrayField, TESLA_PER_GAUSS};
use crate::metrics::{self, SensitivityPoint, ThresholdKind, PHASE_STEP};
use crate::oracle::{fid_mean_jy, fid_var_jy, DephasingParams};
use crate::prm::{self, Amplitude, ExtractOptions, PhaseSeries, PrmEstimate};
use crate::probes::{prepare, ProbeSpec, SqueezingMetrics};
use crate::spinalg::{SpinMagnitude, SpinState};

pub const TIMESERIES_HEADER: &str =
    "t_s, mean_Jx, mean_Jy, std_Jy, var_Q, var_C, phase_raw, phase_relayed, phase_std";
pub const SENSITIVITY_HEADER: &str = "t_s, eta_G_per_sqrtHz, eta_T_per_sqrtHz, sql, hl, sss_ref";
pub const SWEEP_HEADER: &str = "bc_G, eta_opt_T_per_sqrtHz, threshold_flag";
pub const ORACLE_HEADER: &str = "t_s, mean_Jy, var_Q, var_C";
pub const ORACLE_CHECK_HEADER: &str =
    "t_s, mean_oracle, mean_mc, mean_z, var_Q_oracle, var_Q_mc, var_Q_z, var_C_oracle, var_C_mc, var_C_z";
pub const ESTIMATE_HEADER: &str =
    "b0_true_G, b0_hat_G, b0_std_G, b0_stderr_G, b0_line_G, theta0_crude_rad, theta0_refined_rad, residual, r_squared, out_of_bracket";
pub const VALIDATE_HEADER: &str = "check, passed, detail";

/// Relative rise over the low-noise level that marks the threshold.
pub const THRESHOLD_RISE: f64 = 1.2;

/// Number with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 24 * 8);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
        out.push_str(&line.join(", "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Key-value report that ends up in `summary.txt`.
#[derive(Clone, Debug, Default)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
    pub failures: Vec<String>,
}

impl Summary {
    pub fn put(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}: {v}");
        }
        for f in &self.failures {
            let _ = writeln!(s, "FAILED: {f}");
        }
        s
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub struct RunContext {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

impl RunContext {
    pub fn new(config: RunConfig, out_dir: PathBuf, threads: Option<usize>) -> Self {
        Self { config, out_dir, threads }
    }

    fn options(&self, realizations: usize) -> EnsembleOptions {
        EnsembleOptions {
            realizations,
            master_seed: self.config.master_seed,
            threads: self.threads,
            engine: self.config.engine,
            finite_shots: self.config.finite_shots,
            keep_realizations: false,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn ensure_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }
}

pub fn prepare_probe(spin: SpinMagnitude, spec: &ProbeSpec) -> Result<(SpinState, SqueezingMetrics)> {
    prepare(spin, spec)
}

/// Ensemble together with per-run phases and their relay estimate.
pub struct Timeseries {
    pub schedule: Schedule,
    pub ensemble: EnsembleSeries,
    /// Run-averaged signal phase per sample, `NaN` where not extracted.
    pub phase_raw: Vec<f64>,
    pub phase_relayed: Vec<f64>,
    pub phase_std: Vec<f64>,
    pub estimate: Option<PrmEstimate>,
    pub metrics: SqueezingMetrics,
}

fn mean_and_std(runs: &[PhaseSeries], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![f64::NAN; n];
    let mut std = vec![f64::NAN; n];
    let Some(first) = runs.first() else {
        return (mean, std);
    };
    let m = runs.len() as f64;
    for (k, &i) in first.index.iter().enumerate() {
        let mu = runs.iter().map(|r| r.signal[k]).sum::<f64>() / m;
        let var = if runs.len() > 1 {
            runs.iter().map(|r| (r.signal[k] - mu).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        mean[i] = mu;
        std[i] = var.sqrt();
    }
    (mean, std)
}

/// Runs the ensemble for `schedule` and extracts phases run by run.
pub fn timeseries(
    cfg: &RunConfig,
    schedule: Schedule,
    probe: &SpinState,
    metrics: SqueezingMetrics,
    opts: &EnsembleOptions,
) -> Result<Timeseries> {
    let mut opts = opts.clone();
    opts.keep_realizations = true;
    log::info!("{} realizations, {} samples, {}", opts.realizations, schedule.samples.len(), schedule.kind);
    let mut ensemble = run_ensemble(&cfg.field, &schedule, probe, &opts)?;
    let kept = ensemble.kept.take().unwrap_or_default();
    let extract = ExtractOptions { mode: cfg.extraction, amplitude: Amplitude::Envelope, window: cfg.fit_window };
    let omega0 = cfg.field.bias_frequency();
    let runs = kept
        .iter()
        .map(|r| prm::extract_phase(&r.jx, &r.jy, &schedule, omega0, &extract))
        .collect::<Result<Vec<_>>>()?;
    let n = schedule.samples.len();
    let (phase_raw, phase_std) = mean_and_std(&runs, n);

    let estimate = if schedule.kind == SequenceKind::Fid {
        None
    } else {
        Some(prm::refine_theta0(&runs, schedule.tau, cfg.field.gamma)?)
    };
    let mut phase_relayed = phase_raw.clone();
    if let (Some(est), Some(first)) = (&estimate, runs.first()) {
        for (k, &i) in first.index.iter().enumerate() {
            let pulses = first.labels[k].map(|l| l.pulses_before).unwrap_or(0);
            phase_relayed[i] += prm::relay_multiple(pulses) * est.theta0_refined;
        }
    }
    Ok(Timeseries { schedule, ensemble, phase_raw, phase_relayed, phase_std, estimate, metrics })
}

fn timeseries_rows(ts: &Timeseries) -> Vec<Vec<f64>> {
    let e = &ts.ensemble;
    (0..e.len())
        .map(|i| {
            vec![
                e.t[i],
                e.mean_jx[i],
                e.mean_jy[i],
                e.std_jy[i],
                e.var_q[i],
                e.var_c[i],
                ts.phase_raw[i],
                ts.phase_relayed[i],
                ts.phase_std[i],
            ]
        })
        .collect()
}

fn describe_run(cfg: &RunConfig, summary: &mut Summary) {
    summary.put("J", cfg.spin);
    summary.put("probe", format!("{:?}", cfg.probe.kind).to_lowercase());
    summary.put("sequence", cfg.sequence);
    summary.put("B0_G", fmt_num(cfg.field.bias));
    summary.put("b0_G", fmt_num(cfg.field.signal));
    summary.put("bc_G", fmt_num(cfg.field.cutoff));
    summary.put("tau_s", fmt_num(cfg.tau));
    summary.put("n_cycles", cfg.n_cycles);
    summary.put("realizations", cfg.realizations);
    summary.put("master_seed", cfg.master_seed);
    for w in &cfg.warnings {
        summary.put("warning", w);
    }
}

fn put_estimate(summary: &mut Summary, est: &PrmEstimate) {
    summary.put("theta0_crude_rad", fmt_num(est.theta0_crude));
    summary.put("theta0_refined_rad", fmt_num(est.theta0_refined));
    summary.put("b0_hat_G", fmt_num(est.b0_hat));
    summary.put("b0_std_G", fmt_num(est.b0_std));
    summary.put("b0_stderr_G", fmt_num(est.b0_stderr));
    summary.put("relayed_r_squared", fmt_num(est.r_squared));
    if est.out_of_bracket {
        summary.put("warning", "refined theta0 lies outside [0.5, 1.5] x crude estimate");
    }
}

fn configured_schedule(cfg: &RunConfig) -> Result<Schedule> {
    build_schedule(cfg.sequence, cfg.tau, cfg.n_cycles, cfg.samples_per_quarter)
}

pub fn run_simulate(ctx: &RunContext) -> Result<Summary> {
    ctx.ensure_dir()?;
    let cfg = &ctx.config;
    let (probe, metrics) = prepare_probe(cfg.spin, &cfg.probe)?;
    let ts = timeseries(cfg, configured_schedule(cfg)?, &probe, metrics, &ctx.options(cfg.realizations))?;
    write_csv(&ctx.path("timeseries.csv"), TIMESERIES_HEADER, &timeseries_rows(&ts))?;
    let mut summary = Summary::default();
    describe_run(cfg, &mut summary);
    summary.put("xi2_s", fmt_num(metrics.xi2_s));
    summary.put("lambda", fmt_num(metrics.lambda));
    for w in &ts.ensemble.warnings {
        summary.put("warning", w);
    }
    if let Some(est) = &ts.estimate {
        put_estimate(&mut summary, est);
    }
    Ok(summary)
}

pub fn run_estimate(ctx: &RunContext) -> Result<Summary> {
    ctx.ensure_dir()?;
    let cfg = &ctx.config;
    if cfg.sequence == SequenceKind::Fid {
        return Err(Error::Config("estimate needs a decoupling sequence".into()));
    }
    let (probe, metrics) = prepare_probe(cfg.spin, &cfg.probe)?;
    let ts = timeseries(cfg, configured_schedule(cfg)?, &probe, metrics, &ctx.options(cfg.realizations))?;
    let est = ts.estimate.clone().ok_or_else(|| Error::Config("no estimate produced".into()))?;
    write_csv(&ctx.path("timeseries.csv"), TIMESERIES_HEADER, &timeseries_rows(&ts))?;
    write_csv(
        &ctx.path("estimate.csv"),
        ESTIMATE_HEADER,
        &[vec![
            cfg.field.signal,
            est.b0_hat,
            est.b0_std,
            est.b0_stderr,
            est.b0_line,
            est.theta0_crude,
            est.theta0_refined,
            est.residual,
            est.r_squared,
            if est.out_of_bracket { 1.0 } else { 0.0 },
        ]],
    )?;
    let mut summary = Summary::default();
    describe_run(cfg, &mut summary);
    put_estimate(&mut summary, &est);
    let rel = (est.b0_hat - cfg.field.signal) / cfg.field.signal;
    summary.put("b0_relative_error", fmt_num(rel));
    Ok(summary)
}

/// `eta` at every sample with `t > 0`, from the total spread of `Jy` and the
/// slope under a small readout rotation.
pub fn sensitivity_curve(ens: &EnsembleSeries, gamma: f64) -> Result<Vec<SensitivityPoint>> {
    let spread = ens.total_std_jy();
    (0..ens.len())
        .filter(|&i| ens.t[i] > 0.0)
        .map(|i| {
            let slope = metrics::injected_slope(ens.mean_jx[i], ens.mean_jy[i], PHASE_STEP);
            metrics::sensitivity(spread[i], slope, ens.t[i], gamma)
        })
        .collect()
}

pub fn run_sensitivity(ctx: &RunContext) -> Result<Summary> {
    ctx.ensure_dir()?;
    let cfg = &ctx.config;
    let (probe, metrics) = prepare_probe(cfg.spin, &cfg.probe)?;
    let schedule = configured_schedule(cfg)?;
    let ens = run_ensemble(&cfg.field, &schedule, &probe, &ctx.options(cfg.realizations))?;
    let curve = sensitivity_curve(&ens, cfg.field.gamma)?;
    let j = cfg.spin.j();
    let g = cfg.field.gamma;
    let omega = cfg.theta_frequency.omega(g, cfg.field.bias, cfg.field.signal);
    let ratio = metrics.variance_ratio();
    let rows = curve
        .iter()
        .map(|p| {
            let theta = metrics::theta_t(ratio, omega, p.t);
            let sss = metrics::sss_reference(j, p.t, g, &metrics, theta).unwrap_or(f64::NAN);
            Ok(vec![
                p.t,
                p.eta,
                p.eta_tesla(),
                metrics::sql_reference(j, p.t, g) * TESLA_PER_GAUSS,
                metrics::hl_reference(j, p.t, g) * TESLA_PER_GAUSS,
                sss * TESLA_PER_GAUSS,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(&ctx.path("sensitivity.csv"), SENSITIVITY_HEADER, &rows)?;

    let mut summary = Summary::default();
    describe_run(cfg, &mut summary);
    let etas: Vec<f64> = curve.iter().map(|p| p.eta).collect();
    let ts: Vec<f64> = curve.iter().map(|p| p.t).collect();
    let envelope = metrics::lower_envelope(&ts, &etas);
    if let Some((i, eta)) = metrics::optimum(&envelope) {
        summary.put("eta_opt_T_per_sqrtHz", fmt_num(eta * TESLA_PER_GAUSS));
        summary.put("t_opt_s", fmt_num(ts[i]));
    }
    for &t in &cfg.report_times {
        if let Some(p) = curve.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs())) {
            summary.put(&format!("eta_T_per_sqrtHz_at_{t}s"), fmt_num(p.eta_tesla()));
        }
    }
    Ok(summary)
}

/// One row of a noise sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub bc: f64,
    /// Gauss/sqrt(Hz)
    pub eta_opt: f64,
    pub above_threshold: bool,
}

/// Schedule spanning `duration` sampled at every pulse interval.
pub fn sweep_schedule(kind: SequenceKind, tau: f64, duration: f64) -> Result<Schedule> {
    let qpc = kind.quarters_per_cycle() as f64;
    let cycles = (duration / (qpc * tau)).round().max(1.0) as u64;
    build_schedule(kind, tau, cycles, 1)
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp()).collect()
}

/// Best sensitivity within the schedule for each cutoff in `cutoffs`.
pub fn noise_sweep(
    field: &FieldConfig,
    schedule: &Schedule,
    probe: &SpinState,
    cutoffs: &[f64],
    opts: &EnsembleOptions,
) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::with_capacity(cutoffs.len());
    for &bc in cutoffs {
        let mut f = *field;
        f.cutoff = bc;
        let ens = run_ensemble(&f, schedule, probe, opts)?;
        let curve = sensitivity_curve(&ens, f.gamma)?;
        let etas: Vec<f64> = curve.iter().map(|p| p.eta).collect();
        let eta_opt = metrics::optimum(&etas).map(|(_, v)| v).unwrap_or(f64::INFINITY);
        log::info!("{} bc = {bc:e} G: eta_opt = {eta_opt:e} G/sqrt(Hz)", schedule.kind);
        points.push(SweepPoint { bc, eta_opt, above_threshold: false });
    }
    let base = points.first().map(|p| p.eta_opt).unwrap_or(f64::INFINITY);
    for p in points.iter_mut() {
        p.above_threshold = p.eta_opt > THRESHOLD_RISE * base;
    }
    Ok(points)
}

/// Cutoff where the optimum first rises `THRESHOLD_RISE` above the
/// low-noise level, interpolated on log axes.
pub fn measured_threshold(points: &[SweepPoint]) -> Option<f64> {
    let base = points.first()?.eta_opt;
    let level = (THRESHOLD_RISE * base).ln();
    let k = points.iter().position(|p| p.above_threshold)?;
    if k == 0 {
        return Some(points[0].bc);
    }
    let (a, b) = (&points[k - 1], &points[k]);
    let (ya, yb) = (a.eta_opt.ln(), b.eta_opt.ln());
    let f = if yb > ya { (level - ya) / (yb - ya) } else { 1.0 };
    Some((a.bc.ln() + f * (b.bc.ln() - a.bc.ln())).exp())
}

pub fn run_noise_sweep(ctx: &RunContext) -> Result<Summary> {
    ctx.ensure_dir()?;
    let cfg = &ctx.config;
    let (probe, _) = prepare_probe(cfg.spin, &cfg.probe)?;
    let cutoffs = log_grid(cfg.sweep.bc_min, cfg.sweep.bc_max, cfg.sweep.points);
    let mut summary = Summary::default();
    describe_run(cfg, &mut summary);
    let j = cfg.spin.j();
    let g = cfg.field.gamma;
    let t = cfg.sweep.duration;
    for &kind in &cfg.sweep.sequences {
        let schedule = sweep_schedule(kind, cfg.tau, t)?;
        let points = noise_sweep(&cfg.field, &schedule, &probe, &cutoffs, &ctx.options(cfg.realizations))?;
        let rows: Vec<Vec<f64>> = points
            .iter()
            .map(|p| vec![p.bc, p.eta_opt * TESLA_PER_GAUSS, if p.above_threshold { 1.0 } else { 0.0 }])
            .collect();
        write_csv(&ctx.path(&format!("sweep_{kind}.csv")), SWEEP_HEADER, &rows)?;
        match measured_threshold(&points) {
            Some(th) => summary.put(&format!("threshold_{kind}_G"), fmt_num(th)),
            None => summary.put(&format!("threshold_{kind}_G"), "not reached"),
        }
    }
    let probe_kind = if cfg.probe.kind == crate::probes::ProbeKind::Sss { ThresholdKind::SssNoDd } else { ThresholdKind::CssNoDd };
    summary.put("reference_threshold_noDD_G", fmt_num(metrics::threshold_reference(probe_kind, j, t, g, cfg.field.bias)?));
    summary.put(
        "reference_threshold_DD_G",
        fmt_num(metrics::threshold_reference(ThresholdKind::WithDd, j, t, g, cfg.field.bias)?),
    );
    Ok(summary)
}

/// Comparison of the Monte Carlo dephasing run with the closed forms.
#[derive(Clone, Debug)]
pub struct OracleCheck {
    pub rows: Vec<Vec<f64>>,
    /// Largest `|z|` over mean, quantum and classical variance.
    pub worst_z: f64,
    pub passed: bool,
}

/// Dephasing FID of a +x coherent state without bias, `points` times on
/// `[0, 5/omega_c]`, compared within `z_max` standard errors.
pub fn oracle_check(
    field: &FieldConfig,
    spin: SpinMagnitude,
    points: usize,
    opts: &EnsembleOptions,
    z_max: f64,
) -> Result<OracleCheck> {
    let mut f = *field;
    f.bias = 0.0;
    f.noise_model = NoiseModel::Dephasing;
    let p = DephasingParams::from_config(&f, spin.j());
    if !(p.omega_c > 0.0) {
        return Err(Error::InvalidParameter("oracle check needs bc > 0".into()));
    }
    let t_end = 5.0 / p.omega_c;
    let times: Vec<f64> = (0..points).map(|k| t_end * k as f64 / (points.max(2) - 1) as f64).collect();
    let schedule = Schedule::fid_at_times(&times)?;
    let probe = prepare(spin, &ProbeSpec::css())?.0;
    let ens = run_ensemble(&f, &schedule, &probe, opts)?;
    let se_mean = ens.stderr_mean_jy();
    let z = |diff: f64, se: f64| {
        if diff.abs() <= 1e-9 * (1.0 + spin.j()) {
            0.0
        } else if se > 0.0 {
            diff / se
        } else {
            f64::INFINITY
        }
    };
    let mut worst: f64 = 0.0;
    let mut rows = Vec::with_capacity(points);
    for (i, &t) in ens.t.iter().enumerate() {
        let mean = fid_mean_jy(&p, t);
        let (vq, vc) = fid_var_jy(&p, t);
        let zm = z(ens.mean_jy[i] - mean, se_mean[i]);
        let zq = z(ens.var_q[i] - vq, ens.stderr_var_q[i]);
        let zc = z(ens.var_c[i] - vc, ens.stderr_var_c[i]);
        worst = worst.max(zm.abs()).max(zq.abs()).max(zc.abs());
        rows.push(vec![t, mean, ens.mean_jy[i], zm, vq, ens.var_q[i], zq, vc, ens.var_c[i], zc]);
    }
    Ok(OracleCheck { rows, worst_z: worst, passed: worst <= z_max })
}

pub fn run_oracle(ctx: &RunContext) -> Result<Summary> {
    ctx.ensure_dir()?;
    let cfg = &ctx.config;
    let check = oracle_check(&cfg.field, cfg.spin, 50, &ctx.options(cfg.realizations), 4.0)?;
    let analytic: Vec<Vec<f64>> = check.rows.iter().map(|r| vec![r[0], r[1], r[4], r[7]]).collect();
    write_csv(&ctx.path("oracle.csv"), ORACLE_HEADER, &analytic)?;
    write_csv(&ctx.path("oracle_check.csv"), ORACLE_CHECK_HEADER, &check.rows)?;
    let mut summary = Summary::default();
    summary.put("J", cfg.spin);
    summary.put("bc_G", fmt_num(cfg.field.cutoff));
    summary.put("realizations", cfg.realizations);
    summary.put("worst_z", fmt_num(check.worst_z));
    if !check.passed {
        summary.failures.push(format!("oracle mismatch: worst |z| = {:.3}", check.worst_z));
    }
    Ok(summary)
}

/// Named pass/fail check of the self-validation suite.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

/// Fast invariant suite at small size.
pub fn validation_suite(threads: Option<usize>) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let spin = SpinMagnitude::new(10.0)?;
    let css = prepare(spin, &ProbeSpec::css())?.0;
    let base = FieldConfig::new(14.3e-3, 0.0, 0.0);
    let tau = crate::fields::magic_tau(&base, 1)?;

    let s = build_schedule(SequenceKind::BuniDd, tau, 100, 1)?;
    let boundaries = s.cycle_boundaries();
    let mut worst: f64 = 0.0;
    walk_states(&css, &s, &base, &StrayField::zero(), |i, psi| {
        if boundaries.contains(&i) {
            worst = worst.max(1.0 - psi.fidelity(&css));
        }
        Ok(())
    })?;
    out.push(check("refocusing", worst < 1e-9, format!("max infidelity {worst:.3e} over 100 cycles")));

    let noisy = FieldConfig::new(14.3e-3, 1.6e-6, 1e-4);
    let stray = StrayField { bx: 6e-5, by: -3e-5, bz: 8e-5 };
    let s = build_schedule(SequenceKind::BuniDd, tau, 3, 3)?;
    let a = crate::ddsim::run_realization(&css, &s, &noisy, &stray)?;
    let b = crate::ddsim::run_realization_moments(&InitialMoments::from_state(&css)?, &s, &noisy, &stray)?;
    let gap = a.jy.iter().zip(&b.jy).chain(a.jx.iter().zip(&b.jx)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    out.push(check("engine_agreement", gap < 1e-9, format!("max moment gap {gap:.3e}")));

    let signal = FieldConfig::new(14.3e-3, 1.6e-6, 0.0);
    let s = build_schedule(SequenceKind::BuniDd, tau, 10, 4)?;
    let r = crate::ddsim::run_realization(&css, &s, &signal, &StrayField::zero())?;
    let p = prm::extract_phase(&r.jx, &r.jy, &s, signal.bias_frequency(), &ExtractOptions::default())?;
    let est = prm::refine_theta0(std::slice::from_ref(&p), tau, signal.gamma)?;
    let rel = (est.b0_hat / signal.signal - 1.0).abs();
    out.push(check("prm_exactness", rel < 1e-6, format!("relative error {rel:.3e}")));

    let mut opts = EnsembleOptions::new(4000, 7);
    opts.threads = threads;
    let oc = oracle_check(&FieldConfig::new(0.0, 160e-6, 1e-4), SpinMagnitude::new(100.0)?, 50, &opts, 4.0)?;
    out.push(check("dephasing_oracle", oc.passed, format!("worst |z| = {:.3}", oc.worst_z)));

    let s = build_schedule(SequenceKind::BuniDd, tau, 4, 2)?;
    let run = |n| run_ensemble(&noisy, &s, &css, &EnsembleOptions::new(300, 5).with_threads(n));
    let (x, y) = (run(1)?, run(4)?);
    let same = x.mean_jy.iter().zip(&y.mean_jy).all(|(a, b)| a.to_bits() == b.to_bits())
        && x.var_c.iter().zip(&y.var_c).all(|(a, b)| a.to_bits() == b.to_bits());
    out.push(check("determinism", same, "1 vs 4 workers".into()));

    let clean = FieldConfig::new(0.0, 2e-6, 0.0);
    let times: Vec<f64> = (1..40).map(|k| k as f64 * 5e-3).collect();
    let s = Schedule::fid_at_times(&times)?;
    let ens = run_ensemble(&clean, &s, &css, &EnsembleOptions::new(1, 0))?;
    let curve = sensitivity_curve(&ens, clean.gamma)?;
    let dev = curve
        .iter()
        .filter(|p| (clean.gamma * clean.signal * p.t).cos().abs() > 0.5)
        .map(|p| (p.eta / metrics::sql_reference(spin.j(), p.t, clean.gamma) - 1.0).abs())
        .fold(0.0, f64::max);
    out.push(check("sql", dev < 0.02, format!("max relative deviation {dev:.3e}")));
    Ok(out)
}

pub fn run_validate(ctx: &RunContext) -> Result<Summary> {
    ctx.ensure_dir()?;
    let checks = validation_suite(ctx.threads)?;
    let mut summary = Summary::default();
    let mut lines = String::from(VALIDATE_HEADER);
    lines.push('\n');
    for c in &checks {
        let _ = writeln!(lines, "{}, {}, {}", c.name, c.passed, c.detail.replace(',', ";"));
        summary.put(c.name, if c.passed { "pass" } else { "FAIL" });
        if !c.passed {
            summary.failures.push(format!("{}: {}", c.name, c.detail));
        }
    }
    fs::write(ctx.path("validate.csv"), lines)?;
    Ok(summary)
}
