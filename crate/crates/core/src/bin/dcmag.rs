use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dcmag::config::{load_config, parse_config, RunConfig, DEFAULT_CONFIG};
use dcmag::scenarios::{self, RunContext, Summary};
use dcmag::Error;

#[derive(Parser)]
#[command(name = "dcmag", version, about = "DC magnetometry with a collective spin under dynamical decoupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ensemble time series with extracted and relayed phases
    Simulate(Common),
    /// Signal-field estimate from the relayed phase
    Estimate(Common),
    /// Sensitivity curve against the reference limits
    Sensitivity(Common),
    /// Optimal sensitivity against the noise cutoff
    NoiseSweep(Common),
    /// Dephasing Monte Carlo against closed forms
    Oracle(Common),
    /// Built-in invariant checks
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads
    #[arg(long)]
    threads: Option<usize>,
}

fn load(common: &Common) -> dcmag::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => parse_config(DEFAULT_CONFIG)?,
    };
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Summary, (u8, Error)> {
    let (common, job): (&Common, fn(&RunContext) -> dcmag::Result<Summary>) = match &cli.command {
        Command::Simulate(c) => (c, scenarios::run_simulate),
        Command::Estimate(c) => (c, scenarios::run_estimate),
        Command::Sensitivity(c) => (c, scenarios::run_sensitivity),
        Command::NoiseSweep(c) => (c, scenarios::run_noise_sweep),
        Command::Oracle(c) => (c, scenarios::run_oracle),
        Command::Validate(c) => (c, scenarios::run_validate),
    };
    if common.threads == Some(0) {
        return Err((1, Error::Config("--threads must be >= 1".into())));
    }
    let cfg = load(common).map_err(|e| (1, e))?;
    for w in &cfg.warnings {
        log::warn!("{w}");
    }
    let out = cfg.output.clone();
    let ctx = RunContext::new(cfg, out.clone(), common.threads);
    let summary = job(&ctx).map_err(|e| match e {
        Error::Config(_) => (1, e),
        e => (3, e),
    })?;
    std::fs::write(out.join("summary.txt"), summary.render()).map_err(|e| (3, e.into()))?;
    Ok(summary)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(summary) => {
            print!("{}", summary.render());
            if summary.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err((code, e)) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
