//! Run configuration in TOML.
//!
//! Fields take a plain number in Gauss or a string with a unit
//! (`"14.3 mG"`, `"1.6uG"`, `"2 nT"`). Times take seconds or a string
//! with `s`, `ms`, `us` or `ns`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::ddsim::SequenceKind;
use crate::ensemble::Engine;
use crate::error::{Error, Result};
use crate::fields::{magic_tau, FieldConfig, NoiseModel, GAMMA_DEFAULT};
use crate::metrics::ThetaFrequency;
use crate::prm::ExtractionMode;
use crate::probes::{ProbeKind, ProbeSpec, SqueezingMethod};
use crate::spinalg::SpinMagnitude;

/// The parameter set of the reference scenario at desk scale.
pub const DEFAULT_CONFIG: &str = r#"[probe]
j = 100
kind = "css"

[field]
bias = "14.3 mG"
signal = "1.6 uG"
cutoff = "0.1 mG"
noise_model = "full3d"

[sequence]
kind = "buni_dd"
magic_m = 1
n_cycles = 50
samples_per_quarter = 4

[ensemble]
realizations = 1000
master_seed = 1
"#;

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
enum Quantity {
    Number(f64),
    Text(String),
}

fn split_unit(text: &str) -> Result<(f64, String)> {
    let s = text.trim();
    let cut = s
        .char_indices()
        .find(|(i, c)| c.is_alphabetic() && !is_exponent(s, *i))
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(cut);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot read a number from '{text}'")))?;
    Ok((value, unit.trim().to_string()))
}

/// An `e`/`E` between digits belongs to the number.
fn is_exponent(s: &str, i: usize) -> bool {
    let bytes = s.as_bytes();
    matches!(bytes[i], b'e' | b'E')
        && i > 0
        && bytes[i - 1].is_ascii_digit()
        && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit() || *b == b'-' || *b == b'+')
}

/// Field strength in Gauss.
pub fn parse_field(text: &str) -> Result<f64> {
    let (v, unit) = split_unit(text)?;
    let scale = match unit.as_str() {
        "G" | "" => 1.0,
        "mG" => 1e-3,
        "uG" | "μG" | "µG" => 1e-6,
        "nG" => 1e-9,
        "pG" => 1e-12,
        "T" => 1e4,
        "mT" => 10.0,
        "uT" | "μT" | "µT" => 1e-2,
        "nT" => 1e-5,
        "pT" => 1e-8,
        "fT" => 1e-11,
        _ => return Err(Error::Config(format!("unknown field unit '{unit}' in '{text}'"))),
    };
    Ok(v * scale)
}

/// Duration in seconds.
pub fn parse_time(text: &str) -> Result<f64> {
    let (v, unit) = split_unit(text)?;
    let scale = match unit.as_str() {
        "s" | "" => 1.0,
        "ms" => 1e-3,
        "us" | "μs" | "µs" => 1e-6,
        "ns" => 1e-9,
        _ => return Err(Error::Config(format!("unknown time unit '{unit}' in '{text}'"))),
    };
    Ok(v * scale)
}

fn field_value(q: &Quantity) -> Result<f64> {
    match q {
        Quantity::Number(v) => Ok(*v),
        Quantity::Text(s) => parse_field(s),
    }
}

fn time_value(q: &Quantity) -> Result<f64> {
    match q {
        Quantity::Number(v) => Ok(*v),
        Quantity::Text(s) => parse_time(s),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default)]
    probe: RawProbe,
    #[serde(default)]
    field: RawField,
    #[serde(default)]
    sequence: RawSequence,
    #[serde(default)]
    ensemble: RawEnsemble,
    #[serde(default)]
    estimate: RawEstimate,
    #[serde(default)]
    sensitivity: RawSensitivity,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbe {
    j: Option<f64>,
    n: Option<u32>,
    kind: Option<ProbeKind>,
    method: Option<SqueezingMethod>,
    strength: Option<f64>,
    target_xi2: Option<f64>,
    direction: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    gamma: Option<f64>,
    bias: Option<Quantity>,
    signal: Option<Quantity>,
    cutoff: Option<Quantity>,
    noise_model: Option<NoiseModel>,
    c2p: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSequence {
    kind: Option<SequenceKind>,
    tau: Option<Quantity>,
    magic_m: Option<u32>,
    n_cycles: Option<u64>,
    samples_per_quarter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    realizations: Option<usize>,
    master_seed: Option<u64>,
    engine: Option<Engine>,
    finite_shots: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimate {
    extraction: Option<ExtractionMode>,
    fit_window: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSensitivity {
    theta_frequency: Option<ThetaFrequency>,
    times: Option<Vec<Quantity>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    bc_min: Option<Quantity>,
    bc_max: Option<Quantity>,
    points: Option<usize>,
    duration: Option<Quantity>,
    sequences: Option<Vec<SequenceKind>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub bc_min: f64,
    pub bc_max: f64,
    pub points: usize,
    /// Interrogation time over which the optimum is taken (s).
    pub duration: f64,
    pub sequences: Vec<SequenceKind>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub spin: SpinMagnitude,
    pub field: FieldConfig,
    pub probe: ProbeSpec,
    pub sequence: SequenceKind,
    pub tau: f64,
    pub n_cycles: u64,
    pub samples_per_quarter: usize,
    pub realizations: usize,
    pub master_seed: u64,
    pub engine: Engine,
    pub finite_shots: Option<u32>,
    pub extraction: ExtractionMode,
    pub fit_window: usize,
    pub theta_frequency: ThetaFrequency,
    /// Times at which the summary reports the sensitivity (s).
    pub report_times: Vec<f64>,
    pub sweep: SweepConfig,
    pub output: PathBuf,
    pub warnings: Vec<String>,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;

    let spin = match (raw.probe.j, raw.probe.n) {
        (Some(_), Some(_)) => return Err(Error::Config("give either probe.j or probe.n, not both".into())),
        (Some(j), None) => SpinMagnitude::new(j).map_err(|e| Error::Config(e.to_string()))?,
        (None, Some(n)) => SpinMagnitude::new(n as f64).map_err(|e| Error::Config(e.to_string()))?,
        (None, None) => SpinMagnitude::new(100.0)?,
    };
    let mut probe = match raw.probe.kind.unwrap_or(ProbeKind::Css) {
        ProbeKind::Css => ProbeSpec::css(),
        ProbeKind::Sss => ProbeSpec::sss(),
    };
    if let Some(m) = raw.probe.method {
        probe.method = m;
    }
    probe.strength = raw.probe.strength;
    probe.target_xi2 = raw.probe.target_xi2;
    if let Some(d) = raw.probe.direction {
        probe.direction = d;
    }

    let signal = raw.field.signal.as_ref().ok_or_else(|| Error::Config("signal field required".into()))?;
    let mut field = FieldConfig::new(
        field_value(raw.field.bias.as_ref().unwrap_or(&Quantity::Text("14.3 mG".into())))?,
        field_value(signal)?,
        field_value(raw.field.cutoff.as_ref().unwrap_or(&Quantity::Text("0.1 mG".into())))?,
    );
    field.gamma = positive("gamma", raw.field.gamma.unwrap_or(GAMMA_DEFAULT))?;
    field.noise_model = raw.field.noise_model.unwrap_or(NoiseModel::Full3d);
    field.c2p = raw.field.c2p.unwrap_or(0.0);
    let mut warnings = field.validate().map_err(|e| Error::Config(e.to_string()))?;

    let sequence = raw.sequence.kind.unwrap_or(SequenceKind::BuniDd);
    let tau = match (&raw.sequence.tau, raw.sequence.magic_m) {
        (Some(_), Some(_)) => return Err(Error::Config("give either sequence.tau or sequence.magic_m, not both".into())),
        (Some(t), None) => positive("tau", time_value(t)?)?,
        (None, m) => magic_tau(&field, m.unwrap_or(1)).map_err(|e| Error::Config(e.to_string()))?,
    };
    let turn = field.bias_frequency() * tau / (2.0 * std::f64::consts::PI);
    if sequence != SequenceKind::Fid && (turn - turn.round()).abs() * 2.0 * std::f64::consts::PI > 1e-6 {
        warnings.push(format!("tau = {tau:e} s misses the magic condition (gamma B0 tau / 2 pi = {turn:.6})"));
    }
    let n_cycles = raw.sequence.n_cycles.unwrap_or(50);
    let samples_per_quarter = raw.sequence.samples_per_quarter.unwrap_or(4);
    if n_cycles == 0 || samples_per_quarter == 0 {
        return Err(Error::Config("n_cycles and samples_per_quarter must be >= 1".into()));
    }

    let realizations = raw.ensemble.realizations.unwrap_or(1000);
    if realizations == 0 {
        return Err(Error::Config("ensemble.realizations must be >= 1".into()));
    }

    let report_times = match raw.sensitivity.times {
        Some(ts) => ts.iter().map(|q| time_value(q).and_then(|t| positive("sensitivity time", t))).collect::<Result<_>>()?,
        None => Vec::new(),
    };

    let sweep = SweepConfig {
        bc_min: positive("sweep.bc_min", field_value(raw.sweep.bc_min.as_ref().unwrap_or(&Quantity::Text("1e-9 mG".into())))?)?,
        bc_max: positive("sweep.bc_max", field_value(raw.sweep.bc_max.as_ref().unwrap_or(&Quantity::Text("1 mG".into())))?)?,
        points: raw.sweep.points.unwrap_or(19).max(1),
        duration: positive("sweep.duration", time_value(raw.sweep.duration.as_ref().unwrap_or(&Quantity::Text("200 ms".into())))?)?,
        sequences: raw.sweep.sequences.unwrap_or_else(|| vec![SequenceKind::Fid, SequenceKind::BuniDd]),
    };
    if sweep.bc_max < sweep.bc_min {
        return Err(Error::Config("sweep.bc_max must not be below sweep.bc_min".into()));
    }

    Ok(RunConfig {
        spin,
        field,
        probe,
        sequence,
        tau,
        n_cycles,
        samples_per_quarter,
        realizations,
        master_seed: raw.ensemble.master_seed.unwrap_or(0),
        engine: raw.ensemble.engine.unwrap_or_default(),
        finite_shots: raw.ensemble.finite_shots.filter(|&s| s > 0),
        extraction: raw.estimate.extraction.unwrap_or_default(),
        fit_window: raw.estimate.fit_window.unwrap_or(5),
        theta_frequency: raw.sensitivity.theta_frequency.unwrap_or_default(),
        report_times,
        sweep,
        output: raw.output.dir.unwrap_or_else(|| PathBuf::from("out")),
        warnings,
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_parses() {
        let c = parse_config(DEFAULT_CONFIG).unwrap();
        assert!((c.field.bias - 14.3e-3).abs() < 1e-15);
        assert!((c.field.signal - 1.6e-6).abs() < 1e-18);
        assert!((c.field.cutoff - 1e-4).abs() < 1e-16);
        assert!((c.tau / 1e-4 - 1.0).abs() < 2e-3, "{}", c.tau);
        assert!(c.warnings.is_empty(), "{:?}", c.warnings);
        assert_eq!(c.spin.j(), 100.0);
    }

    #[test]
    fn signal_is_required() {
        let err = parse_config("[field]\nbias = \"14.3 mG\"\n").unwrap_err();
        assert!(err.to_string().contains("signal field required"));
    }

    #[test]
    fn units() {
        assert!((parse_field("1.6uG").unwrap() - 1.6e-6).abs() < 1e-20);
        assert!((parse_field("1.6 μG").unwrap() - 1.6e-6).abs() < 1e-20);
        assert!((parse_field("0.1 mG").unwrap() - 1e-4).abs() < 1e-18);
        assert!((parse_field("1e-9 mG").unwrap() - 1e-12).abs() < 1e-25);
        assert!((parse_field("2 nT").unwrap() - 2e-5).abs() < 1e-19);
        assert_eq!(parse_field("3").unwrap(), 3.0);
        assert!(parse_field("3 ms").is_err());
        assert!(parse_field("mG").is_err());
        assert!((parse_time("0.1 ms").unwrap() - 1e-4).abs() < 1e-18);
        assert!((parse_time("200ms").unwrap() - 0.2).abs() < 1e-15);
        assert!(parse_time("2 mG").is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_conflicts() {
        let base = "[field]\nsignal = \"1 uG\"\n";
        assert!(parse_config(&format!("{base}colour = 3\n")).is_err());
        assert!(parse_config(&format!("{base}[probe]\nj = 2\nn = 4\n")).is_err());
        assert!(parse_config(&format!("{base}[sequence]\ntau = \"0.1 ms\"\nmagic_m = 1\n")).is_err());
        let c = parse_config(&format!("{base}[probe]\nn = 50\n")).unwrap();
        assert_eq!(c.spin.j(), 50.0);
        let c = parse_config(&format!("{base}[sequence]\ntau = \"0.1 ms\"\n")).unwrap();
        assert!(c.warnings.iter().any(|w| w.contains("magic")));
    }
}
