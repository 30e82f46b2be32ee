//! Experiments: drive a learner against the simulator, account regret
//! against the exact optimal gain, and run the invariant probes.

mod probes;
mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use probes::{
    epoch_count_bound, expected_regret_bound, probe_epoch_count, probe_ineq17, theorem_bound, ProbeEntry,
    ProbeReport, PROBE_SLACK,
};
pub use sweep::{fit_slope, sweep, AggregatePoint, SeedOutcome, SweepResult, SweepSummary};

use crate::channel::RewardSequenceSpec;
use crate::config::{ConfigError, ExperimentConfig, ProbeFlags};
use crate::learner::{misspecification_report, EpochRecord, Learner, LearnerConfig, LearnerError, Misspecification};
use crate::mdp::{diameter, optimal_gain, MdpError, StationaryPolicy, TabularMdp};
use crate::sim::{Environment, SimError};

/// Tolerance for the exact solvers used in regret accounting.
pub const SOLVER_TOLERANCE: f64 = 1e-10;
/// Absolute tolerance of the per-step mass accounting probes.
pub const ACCOUNTING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver: {0}")]
    Solver(#[from] MdpError),
    #[error("learner: {0}")]
    Learner(#[from] LearnerError),
    #[error("simulator: {0}")]
    Sim(#[from] SimError),
}

/// A fully built experiment: true model, channel, exact oracles, learner
/// settings. Shared read-only by every seed.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub mdp: TabularMdp,
    pub channel: RewardSequenceSpec,
    pub rho_star: f64,
    pub optimal_policy: StationaryPolicy,
    pub diameter: f64,
    /// Declared spillover of the channel (certified unless nominal).
    pub d_declared: f64,
    pub learner: LearnerConfig,
}

impl Experiment {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let mdp = config.build_mdp()?;
        if config.initial_state >= mdp.num_states() {
            return Err(SimError::InvalidInitialState { state: config.initial_state, num_states: mdp.num_states() }.into());
        }
        let channel = config.build_channel(&mdp)?;
        let diameter = diameter(&mdp, 1e-9)?;
        let (report, optimal_policy) = optimal_gain(&mdp, SOLVER_TOLERANCE)?;
        let d_declared = channel.declared_spillover();
        let learner = config.learner_config(d_declared);
        learner.validate()?;
        Ok(Self {
            config: config.clone(),
            mdp,
            channel,
            rho_star: report.gain,
            optimal_policy,
            diameter,
            d_declared,
            learner,
        })
    }

    pub fn misspecification(&self) -> Misspecification {
        misspecification_report(self.learner.d_hat, self.d_declared)
    }

    /// Checkpoint times: 0, every power of two up to the horizon, the horizon.
    pub fn checkpoint_times(&self) -> Vec<u64> {
        checkpoint_times(self.config.horizon)
    }

    /// Regret bound at `horizon` with the given confidence level.
    pub fn theorem_bound(&self, horizon: u64, delta: f64) -> f64 {
        theorem_bound(self.diameter, self.mdp.num_states(), self.mdp.num_actions(), horizon, self.d_declared, delta)
    }

    /// One run of the learner for `horizon` steps.
    pub fn run(&self, seed: u64) -> Result<RunResult, HarnessError> {
        run_experiment(self, seed)
    }
}

pub fn checkpoint_times(horizon: u64) -> Vec<u64> {
    let mut times = vec![0];
    let mut p = 1u64;
    while p <= horizon {
        times.push(p);
        match p.checked_mul(2) {
            Some(next) => p = next,
            None => break,
        }
    }
    if *times.last().unwrap() != horizon {
        times.push(horizon);
    }
    times
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    pub generated: f64,
    pub observed: f64,
    /// `t rho* - generated`.
    pub regret: f64,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub num_states: usize,
    pub num_actions: usize,
    pub diameter: f64,
    pub rho_star: f64,
    pub d_certified: f64,
    pub d_hat: f64,
    pub misspecification: Misspecification,
    pub horizon: u64,
    pub regret: f64,
    /// `T rho* - observed`, for comparison only.
    pub observed_regret: f64,
    pub epochs: u64,
    pub theorem_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub checkpoints: Vec<Checkpoint>,
    pub summary: RunSummary,
}

impl RegretTrace {
    pub fn at(&self, t: u64) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.t == t)
    }

    /// CSV text with header `t,generated,observed,regret,epoch`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "generated", "observed", "regret", "epoch"]).expect("in-memory write");
        for c in &self.checkpoints {
            w.write_record([
                c.t.to_string(),
                c.generated.to_string(),
                c.observed.to_string(),
                c.regret.to_string(),
                c.epoch.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub trace: RegretTrace,
    pub probes: ProbeReport,
    pub epochs: Vec<EpochRecord>,
}

/// Drives the learner for the configured horizon from the configured
/// initial state. Regret is accounted on generated reward; observed reward
/// is logged alongside.
pub fn run_experiment(exp: &Experiment, seed: u64) -> Result<RunResult, HarnessError> {
    let cfg = &exp.config;
    let flags: &ProbeFlags = &cfg.probes;
    let (ns, na) = (exp.mdp.num_states(), exp.mdp.num_actions());
    let horizon = cfg.horizon;
    let d = exp.d_declared;
    let mut env = Environment::reset(exp.mdp.clone(), exp.channel.clone(), cfg.initial_state, seed)?;
    let mut learner = Learner::new(ns, na, exp.learner.clone())?;
    let mut probes = ProbeReport::default();

    let times = checkpoint_times(horizon);
    let mut next_checkpoint = 1;
    let mut checkpoints = Vec::with_capacity(times.len());
    checkpoints.push(Checkpoint { t: 0, generated: 0.0, observed: 0.0, regret: 0.0, epoch: 0 });

    let mut x = vec![0.0; ns];
    let mut observed_total = 0.0;
    for t in 1..=horizon {
        let s = env.current_state();
        if learner.epoch_should_end(s) {
            learner.begin_epoch(t)?;
            if flags.ineq17 {
                probe_ineq17(learner.stats(), env.ledger(), exp.learner.d_hat, &mut probes.ineq17);
            }
        }
        let a = learner.act(s);
        let s_next = env.port().step_into(a, &mut x)?;
        learner.record(s, a, &x, s_next)?;
        observed_total += x.iter().sum::<f64>();

        let generated = env.ledger().generated_total;
        let buffered = env.buffered_mass();
        probes.conservation.check((observed_total + buffered - generated).abs(), ACCOUNTING_TOLERANCE);
        if flags.prefix_domination {
            let gap = generated - observed_total;
            // both ends of [0, d] are checked as one margin
            probes.prefix_domination.check((-gap).max(gap - d), ACCOUNTING_TOLERANCE);
        }
        if flags.spillover {
            probes.spillover.check(buffered, d + ACCOUNTING_TOLERANCE);
        }

        if times.get(next_checkpoint) == Some(&t) {
            checkpoints.push(Checkpoint {
                t,
                generated,
                observed: observed_total,
                regret: t as f64 * exp.rho_star - generated,
                epoch: learner.stats().epoch_index,
            });
            next_checkpoint += 1;
        }
    }
    let epochs = learner.stats().epoch_index;
    learner.finish();
    if flags.epoch_count {
        probes.epoch_count = probe_epoch_count(epochs, ns, na, horizon);
    }

    let generated = env.ledger().generated_total;
    let summary = RunSummary {
        seed,
        num_states: ns,
        num_actions: na,
        diameter: exp.diameter,
        rho_star: exp.rho_star,
        d_certified: d,
        d_hat: exp.learner.d_hat,
        misspecification: exp.misspecification(),
        horizon,
        regret: horizon as f64 * exp.rho_star - generated,
        observed_regret: horizon as f64 * exp.rho_star - observed_total,
        epochs,
        theorem_bound: exp.theorem_bound(horizon, exp.learner.delta),
    };
    Ok(RunResult { trace: RegretTrace { checkpoints, summary }, probes, epochs: learner.epochs().to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> ExperimentConfig {
        let text = format!(
            "horizon = 1000\nseeds = [1, 2]\n[mdp]\nsource = \"inline\"\nnum_states = 1\nnum_actions = 1\n\
             transition = [[1.0]]\nreward = [[0.4]]\n[channel]\ntotal_law = \"constant\"\n{extra}\n[learner]\n"
        );
        ExperimentConfig::parse(&text, &[]).unwrap()
    }

    #[test]
    fn checkpoint_grid() {
        assert_eq!(checkpoint_times(1), vec![0, 1]);
        assert_eq!(checkpoint_times(10), vec![0, 1, 2, 4, 8, 10]);
        assert_eq!(checkpoint_times(16), vec![0, 1, 2, 4, 8, 16]);
    }

    #[test]
    fn single_state_constant_total_has_zero_regret() {
        let exp = Experiment::from_config(&config("")).unwrap();
        let run = exp.run(7).unwrap();
        for c in &run.trace.checkpoints {
            assert!(c.regret.abs() < 1e-9, "{c:?}");
            assert!((c.regret + c.generated - c.t as f64 * 0.4).abs() < 1e-6);
        }
        assert_eq!(run.probes.total_violations(), 0);
        assert_eq!(run.trace.checkpoints.last().unwrap().t, 1000);
    }

    #[test]
    fn identical_actions_give_zero_regret() {
        let text = "horizon = 512\nseeds = [1]\n[mdp]\nsource = \"inline\"\nnum_states = 2\nnum_actions = 2\n\
                    transition = [[0.5, 0.5], [0.5, 0.5], [0.3, 0.7], [0.3, 0.7]]\nreward = [[0.2, 0.2], [0.6, 0.6]]\n\
                    [channel]\nkind = \"fixed_delay\"\ndelay_offset = 2\ntotal_law = \"constant\"\n[learner]\n";
        let cfg = ExperimentConfig::parse(text, &[]).unwrap();
        let exp = Experiment::from_config(&cfg).unwrap();
        let run = exp.run(3).unwrap();
        // every action has the same rewards and rows, so only state noise remains;
        // the regret identity must still hold exactly
        for c in &run.trace.checkpoints {
            assert!((c.regret + c.generated - c.t as f64 * exp.rho_star).abs() < 1e-6);
        }
        assert_eq!(run.probes.total_violations(), 0);
    }

    #[test]
    fn delayed_single_state_epochs_double() {
        let exp = Experiment::from_config(&config("kind = \"fixed_delay\"\ndelay_offset = 3")).unwrap();
        let run = exp.run(1).unwrap();
        let starts: Vec<u64> = run.epochs.iter().map(|e| e.start).collect();
        assert_eq!(&starts[..6], &[1, 2, 3, 5, 9, 17]);
        assert_eq!(run.probes.ineq17.violations, 0);
        assert!(run.probes.ineq17.checks > 0);
        assert_eq!(run.probes.prefix_domination.violations, 0);
    }

    #[test]
    fn under_estimated_d_hat_is_caught() {
        let mut cfg = config("kind = \"fixed_delay\"\ndelay_offset = 3");
        cfg.learner.d_hat = crate::config::DHatSetting::Value(0.0);
        let exp = Experiment::from_config(&cfg).unwrap();
        assert_eq!(exp.misspecification(), Misspecification::UnderEstimated);
        let run = exp.run(1).unwrap();
        assert!(run.probes.ineq17.violations > 0);
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = ExperimentConfig::parse(
            "horizon = 3000\nseeds = [5]\n[mdp]\nsource = \"riverswim\"\nn = 4\n[channel]\nkind = \"uniform_window\"\nsupport_width = 4\n[learner]\n",
            &[],
        )
        .unwrap();
        let exp = Experiment::from_config(&cfg).unwrap();
        let a = exp.run(5).unwrap();
        let b = exp.run(5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace.to_csv(), b.trace.to_csv());
        assert_ne!(a.trace, exp.run(6).unwrap().trace);
    }

    #[test]
    fn csv_header() {
        let run = Experiment::from_config(&config("")).unwrap().run(1).unwrap();
        let csv = run.trace.to_csv();
        assert!(csv.starts_with("t,generated,observed,regret,epoch\n0,0,0,0,0\n"), "{csv}");
    }
}
