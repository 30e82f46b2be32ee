//! The `ducrl` command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 config error, 3 solver or
//! runtime error, 4 probe violation (or failed channel certification).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::channel::joint_spillover;
use crate::config::{ConfigError, ExperimentConfig};
use crate::harness::{sweep, Experiment, HarnessError, ProbeReport, RunSummary, SweepSummary};
use crate::learner::EpochRecord;
use crate::mdp::{diameter, hitting_time_matrix, optimal_gain, MdpError, RawMdp, TabularMdp};
use crate::rng::{stream, StreamRole};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_PROBE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ducrl", about = "Average-reward learning with delayed, anonymous rewards")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the first seed; write trace.csv, summary.toml and probes.toml.
    Run(Common),
    /// Run every seed; write trace_seed_<seed>.csv, summary.toml and probes.toml.
    Sweep(Common),
    /// Solve the model exactly; write solution.toml.
    Solve(Common),
    /// Run every seed and report only the invariant probes.
    Probe(Common),
    /// Compare the analytic spillover bound with sampled sequences.
    CertifyChannel(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Parallel seeds for sweep and probe.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Dot-path edits, e.g. `learner.d_hat=0`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = if matches!(e, ConfigError::Io { .. }) { EXIT_IO } else { EXIT_CONFIG };
        Self::new(code, e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => c.into(),
            HarnessError::Sim(_) => Self::new(EXIT_CONFIG, e.to_string()),
            other => Self::new(EXIT_SOLVER, other.to_string()),
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::new(EXIT_IO, format!("cannot write {}: {e}", path.display())))
}

fn to_toml<T: Serialize>(value: &T) -> Result<String, Failure> {
    toml::to_string(value).map_err(|e| Failure::new(EXIT_IO, format!("cannot serialize output: {e}")))
}

fn prepare(common: &Common) -> Result<ExperimentConfig, Failure> {
    let cfg = ExperimentConfig::load(&common.config, &common.overrides)?;
    fs::create_dir_all(&common.out)
        .map_err(|e| Failure::new(EXIT_IO, format!("cannot create {}: {e}", common.out.display())))?;
    Ok(cfg)
}

fn probe_verdict(probes: &ProbeReport, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let violations = probes.total_violations();
    if violations > 0 && !cfg.probes.expect_violation {
        let detail: Vec<String> = probes
            .entries()
            .iter()
            .filter(|(_, e)| e.violations > 0)
            .map(|(name, e)| format!("{name}: {}", e.violations))
            .collect();
        return Err(Failure::new(EXIT_PROBE, format!("probe violations ({})", detail.join(", "))));
    }
    Ok(())
}

#[derive(Serialize)]
struct RunFile<'a> {
    probe_violations: u64,
    run: &'a RunSummary,
    config: &'a ExperimentConfig,
    epochs: &'a [EpochRecord],
}

fn cmd_run(common: &Common) -> Result<(), Failure> {
    let cfg = prepare(common)?;
    let exp = Experiment::from_config(&cfg)?;
    let result = exp.run(cfg.seeds[0])?;
    write(&common.out, "trace.csv", &result.trace.to_csv())?;
    let summary = RunFile {
        probe_violations: result.probes.total_violations(),
        run: &result.trace.summary,
        config: &cfg,
        epochs: &result.epochs,
    };
    write(&common.out, "summary.toml", &to_toml(&summary)?)?;
    write(&common.out, "probes.toml", &to_toml(&result.probes)?)?;
    probe_verdict(&result.probes, &cfg)
}

#[derive(Serialize)]
struct SweepFile<'a> {
    summary: &'a SweepSummary,
    failures: Vec<SeedFailure>,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct SeedFailure {
    seed: u64,
    error: String,
}

fn run_sweep(common: &Common, write_traces: bool) -> Result<(), Failure> {
    let cfg = prepare(common)?;
    let exp = Experiment::from_config(&cfg)?;
    let result = sweep(&exp, &cfg.seeds, common.jobs)?;
    let mut failures = Vec::new();
    for o in &result.outcomes {
        match &o.result {
            Ok(run) if write_traces => write(&common.out, &format!("trace_seed_{}.csv", o.seed), &run.trace.to_csv())?,
            Ok(_) => {}
            Err(e) => failures.push(SeedFailure { seed: o.seed, error: e.clone() }),
        }
    }
    let first_failure = failures.first().map(|f| format!("seed {} failed: {}", f.seed, f.error));
    if write_traces {
        let file = SweepFile { summary: &result.summary, failures, config: &cfg };
        write(&common.out, "summary.toml", &to_toml(&file)?)?;
    }
    write(&common.out, "probes.toml", &to_toml(&result.probes)?)?;
    if let Some(message) = first_failure {
        return Err(Failure::new(EXIT_SOLVER, message));
    }
    probe_verdict(&result.probes, &cfg)
}

#[derive(Serialize)]
struct Solution {
    num_states: usize,
    num_actions: usize,
    rho_star: f64,
    diameter: f64,
    optimal_policy: Vec<usize>,
    /// Row `s`, column `target`: minimal expected steps from `s` to `target`.
    hitting_times: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Diagnostic {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    from: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    to: Option<usize>,
}

/// Reads either an experiment config or a bare MDP file.
fn load_model(common: &Common) -> Result<TabularMdp, Failure> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Failure::new(EXIT_IO, format!("cannot read {}: {e}", common.config.display())))?;
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Failure::new(EXIT_CONFIG, e.to_string()))?;
    if doc.contains_key("num_states") {
        let raw: RawMdp = toml::from_str(&text).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
        return raw.validate().map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()));
    }
    Ok(ExperimentConfig::load(&common.config, &common.overrides)?.build_mdp()?)
}

fn cmd_solve(common: &Common) -> Result<(), Failure> {
    let mdp = load_model(common)?;
    fs::create_dir_all(&common.out)
        .map_err(|e| Failure::new(EXIT_IO, format!("cannot create {}: {e}", common.out.display())))?;
    let solved = (|| -> Result<Solution, MdpError> {
        let d = diameter(&mdp, 1e-9)?;
        let (report, policy) = optimal_gain(&mdp, 1e-10)?;
        Ok(Solution {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            rho_star: report.gain,
            diameter: d,
            optimal_policy: policy.actions().to_vec(),
            hitting_times: hitting_time_matrix(&mdp, 1e-9)?,
        })
    })();
    match solved {
        Ok(solution) => write(&common.out, "solution.toml", &to_toml(&solution)?),
        Err(e) => {
            let (error, from, to) = match e {
                MdpError::InfiniteDiameter { from, to } => ("infinite_diameter", Some(from), Some(to)),
                MdpError::NoConvergence { .. } => ("no_convergence", None, None),
                _ => ("solver_error", None, None),
            };
            let diag = Diagnostic { error, message: e.to_string(), from, to };
            write(&common.out, "diagnostic.toml", &to_toml(&diag)?)?;
            Err(Failure::new(EXIT_SOLVER, e.to_string()))
        }
    }
}

#[derive(Serialize)]
struct Certificate {
    analytic_d: f64,
    empirical_max: f64,
    samples: usize,
    support_width: usize,
    holds: bool,
}

fn cmd_certify(common: &Common) -> Result<(), Failure> {
    let cfg = prepare(common)?;
    let mdp = cfg.build_mdp()?;
    let channel = cfg.build_channel(&mdp)?;
    if !channel.is_certified() {
        return Err(Failure::new(
            EXIT_CONFIG,
            "channel has unbounded support; its spillover cannot be certified (negative-test channel)",
        ));
    }
    let analytic = channel.spillover_bound();
    let mut rng = stream(cfg.seeds[0], StreamRole::Certification);
    let mut empirical: f64 = 0.0;
    let mut batch = Vec::with_capacity(mdp.num_states() * mdp.num_actions());
    for _ in 0..cfg.certify_samples {
        batch.clear();
        for s in 0..mdp.num_states() {
            for a in 0..mdp.num_actions() {
                batch.push(channel.sample_sequence(s, a, &mut rng));
            }
        }
        empirical = empirical.max(joint_spillover(&batch));
    }
    let holds = empirical <= analytic + 1e-12;
    let cert = Certificate {
        analytic_d: analytic,
        empirical_max: empirical,
        samples: cfg.certify_samples,
        support_width: channel.support_width().unwrap_or(0),
        holds,
    };
    println!("analytic d = {analytic}, empirical max over {} samples = {empirical}", cfg.certify_samples);
    write(&common.out, "certificate.toml", &to_toml(&cert)?)?;
    if holds {
        Ok(())
    } else {
        Err(Failure::new(EXIT_PROBE, format!("empirical spillover {empirical} exceeds analytic bound {analytic}")))
    }
}

pub fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Sweep(c) => run_sweep(c, true),
        Command::Probe(c) => run_sweep(c, false),
        Command::Solve(c) => cmd_solve(c),
        Command::CertifyChannel(c) => cmd_certify(c),
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main_exit_code() -> i32 {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
