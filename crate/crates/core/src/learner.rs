//! The delayed-UCRL2 learner.
//!
//! Time is split into epochs. At the start of each epoch the learner rebuilds
//! its confidence set from counts and attributed observations, solves it with
//! extended value iteration, and then plays the resulting deterministic policy
//! until some pair's in-epoch visit count reaches its count before the epoch.
//!
//! Observations are partially anonymous: `x_t(s)` mixes mass from every past
//! visit to `s`. Because a deterministic policy pairs each state with a single
//! action for a whole epoch, everything observed at `s` during an epoch is
//! credited to that one pair when the epoch closes. Mass spilling across epoch
//! boundaries is what the `d_hat * E / N` term of the reward radius covers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evi::{extended_value_iteration, ConfidenceSet, EviError, EviOptions, DEFAULT_ITERATION_CAP};
use crate::mdp::StationaryPolicy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("invalid learner configuration: {0}")]
    InvalidConfig(String),
    #[error("epoch starting at t = {t}: {source}")]
    EviNoConvergence { t: u64, source: EviError },
    #[error("action {action} at state {state} differs from the epoch policy's {expected}")]
    PolicyMismatch { state: usize, action: usize, expected: usize },
    #[error("epoch start {t} must be positive and later than the current epoch start {current}")]
    InvalidEpochStart { t: u64, current: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Reward radius widened by `d_hat * E_k / max(N_k, 1)`.
    #[default]
    Ducrl2,
    /// Plain UCRL2 radius, ignoring delay.
    DelayNaiveBaseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    /// Confidence parameter, in `(0,1)`.
    pub delta: f64,
    /// Spillover bound handed to the algorithm.
    pub d_hat: f64,
    pub mode: Mode,
    pub evi_iteration_cap: usize,
    pub clip_optimistic_reward: bool,
    /// Keep per-epoch presence tables (debug aid; costs memory linear in epochs).
    pub record_presence_history: bool,
}

impl LearnerConfig {
    pub fn new(delta: f64, d_hat: f64) -> Self {
        Self {
            delta,
            d_hat,
            mode: Mode::Ducrl2,
            evi_iteration_cap: DEFAULT_ITERATION_CAP,
            clip_optimistic_reward: false,
            record_presence_history: false,
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(LearnerError::InvalidConfig(format!("delta = {} not in (0,1)", self.delta)));
        }
        if !(self.d_hat >= 0.0 && self.d_hat.is_finite()) {
            return Err(LearnerError::InvalidConfig(format!("d_hat = {} must be finite and >= 0", self.d_hat)));
        }
        if self.evi_iteration_cap == 0 {
            return Err(LearnerError::InvalidConfig("evi_iteration_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Counts and sums maintained across epochs. Tables are row-major over `(s,a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStatistics {
    num_states: usize,
    num_actions: usize,
    /// `k`, zero before the first epoch.
    pub epoch_index: u64,
    /// `t_k`.
    pub epoch_start: u64,
    /// `N_k(s,a)`: visits before the current epoch.
    pub visit_count_total: Vec<u64>,
    /// `nu_k(s,a)`: visits within the current epoch.
    pub visit_count_epoch: Vec<u64>,
    /// `E_k(s,a)`: completed epochs in which the pair occurred.
    pub presence_count: Vec<u64>,
    /// Observed `x(s)` mass credited to each pair over its presence epochs.
    pub reward_sum_attributed: Vec<f64>,
    /// `(s,a,s')` transition counts over all recorded steps.
    pub transition_counts: Vec<u64>,
    /// Per completed epoch, which pairs occurred. Only kept on request.
    pub presence_history: Option<Vec<Vec<bool>>>,
}

impl EpochStatistics {
    fn new(num_states: usize, num_actions: usize, keep_history: bool) -> Self {
        let pairs = num_states * num_actions;
        Self {
            num_states,
            num_actions,
            epoch_index: 0,
            epoch_start: 0,
            visit_count_total: vec![0; pairs],
            visit_count_epoch: vec![0; pairs],
            presence_count: vec![0; pairs],
            reward_sum_attributed: vec![0.0; pairs],
            transition_counts: vec![0; pairs * num_states],
            presence_history: keep_history.then(Vec::new),
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn pair(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    pub fn n(&self, s: usize, a: usize) -> u64 {
        self.visit_count_total[self.pair(s, a)]
    }

    pub fn nu(&self, s: usize, a: usize) -> u64 {
        self.visit_count_epoch[self.pair(s, a)]
    }

    pub fn presence(&self, s: usize, a: usize) -> u64 {
        self.presence_count[self.pair(s, a)]
    }

    /// `r_hat_k(s,a)`.
    pub fn reward_estimate(&self, s: usize, a: usize) -> f64 {
        let p = self.pair(s, a);
        self.reward_sum_attributed[p] / self.visit_count_total[p].max(1) as f64
    }

    /// `p_hat_k(.|s,a)`. A pair never visited gets the uniform row, which is
    /// harmless because its L1 radius already covers the whole simplex.
    pub fn transition_estimate(&self, s: usize, a: usize) -> Vec<f64> {
        let p = self.pair(s, a);
        let n = self.visit_count_total[p];
        let counts = &self.transition_counts[p * self.num_states..(p + 1) * self.num_states];
        if n == 0 {
            return vec![1.0 / self.num_states as f64; self.num_states];
        }
        counts.iter().map(|&c| c as f64 / n as f64).collect()
    }
}

/// Reward radius `sqrt(7 ln(2 S A t / delta) / (2 max(N,1))) + d_hat E / max(N,1)`.
pub fn reward_radius(num_states: usize, num_actions: usize, t: u64, delta: f64, n: u64, e: u64, d_hat: f64) -> f64 {
    let n = n.max(1) as f64;
    let log_term = (2.0 * num_states as f64 * num_actions as f64 * t as f64 / delta).ln();
    (7.0 * log_term / (2.0 * n)).sqrt() + d_hat * e as f64 / n
}

/// Transition L1 radius `sqrt(14 S ln(2 A t / delta) / max(N,1))`.
pub fn transition_radius(num_states: usize, num_actions: usize, t: u64, delta: f64, n: u64) -> f64 {
    let log_term = (2.0 * num_actions as f64 * t as f64 / delta).ln();
    (14.0 * num_states as f64 * log_term / n.max(1) as f64).sqrt()
}

/// What was decided at one epoch start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub start: u64,
    pub gain: f64,
    pub policy: Vec<usize>,
    pub max_reward_radius: f64,
    pub max_transition_radius: f64,
    pub evi_iterations: usize,
}

/// How `d_hat` compares to the true spillover bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Misspecification {
    Exact,
    OverEstimated,
    UnderEstimated,
}

/// Labels a run by its `d_hat` against the true `d` (relative tolerance 1e-9).
pub fn misspecification_report(d_hat: f64, true_d: f64) -> Misspecification {
    let tol = 1e-9 * true_d.abs().max(1.0);
    if (d_hat - true_d).abs() <= tol {
        Misspecification::Exact
    } else if d_hat > true_d {
        Misspecification::OverEstimated
    } else {
        Misspecification::UnderEstimated
    }
}

/// Learner state: statistics, the current policy and the open epoch's accumulators.
#[derive(Debug, Clone)]
pub struct Learner {
    num_states: usize,
    num_actions: usize,
    config: LearnerConfig,
    stats: EpochStatistics,
    current_policy: Option<StationaryPolicy>,
    current_gain: f64,
    current_set: Option<ConfidenceSet>,
    /// `sum_tau x_tau(s)` within the open epoch.
    epoch_observed: Vec<f64>,
    /// The action paired with each state in the open epoch, if visited.
    epoch_action: Vec<Option<usize>>,
    epochs: Vec<EpochRecord>,
    finished: bool,
}

impl Learner {
    pub fn new(num_states: usize, num_actions: usize, config: LearnerConfig) -> Result<Self, LearnerError> {
        config.validate()?;
        if num_states == 0 || num_actions == 0 {
            return Err(LearnerError::InvalidConfig("empty state or action space".into()));
        }
        Ok(Self {
            num_states,
            num_actions,
            stats: EpochStatistics::new(num_states, num_actions, config.record_presence_history),
            config,
            current_policy: None,
            current_gain: f64::NAN,
            current_set: None,
            epoch_observed: vec![0.0; num_states],
            epoch_action: vec![None; num_states],
            epochs: Vec::new(),
            finished: false,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn stats(&self) -> &EpochStatistics {
        &self.stats
    }

    pub fn current_policy(&self) -> Option<&StationaryPolicy> {
        self.current_policy.as_ref()
    }

    /// `rho~_k` of the current epoch.
    pub fn current_gain(&self) -> f64 {
        self.current_gain
    }

    pub fn confidence_set(&self) -> Option<&ConfidenceSet> {
        self.current_set.as_ref()
    }

    pub fn epochs(&self) -> &[EpochRecord] {
        &self.epochs
    }

    /// Credits the open epoch to the statistics: `E += 1` and observed mass
    /// for every pair that occurred, `N += nu`. States never visited in the
    /// epoch contribute nothing.
    fn close_epoch(&mut self) {
        if self.stats.epoch_index == 0 {
            return;
        }
        let mut present = vec![false; self.num_states * self.num_actions];
        for s in 0..self.num_states {
            if let Some(a) = self.epoch_action[s] {
                let p = s * self.num_actions + a;
                self.stats.presence_count[p] += 1;
                self.stats.reward_sum_attributed[p] += self.epoch_observed[s];
                present[p] = true;
            }
        }
        for (total, nu) in self.stats.visit_count_total.iter_mut().zip(&self.stats.visit_count_epoch) {
            *total += nu;
        }
        self.stats.visit_count_epoch.iter_mut().for_each(|nu| *nu = 0);
        self.epoch_observed.iter_mut().for_each(|x| *x = 0.0);
        self.epoch_action.iter_mut().for_each(|a| *a = None);
        if let Some(history) = &mut self.stats.presence_history {
            history.push(present);
        }
    }

    /// Builds the confidence set for an epoch starting at `t`.
    pub fn build_confidence_set(&self, t: u64) -> ConfidenceSet {
        let (ns, na) = (self.num_states, self.num_actions);
        let d_term = match self.config.mode {
            Mode::Ducrl2 => self.config.d_hat,
            Mode::DelayNaiveBaseline => 0.0,
        };
        let mut reward_center = Vec::with_capacity(ns * na);
        let mut reward_rad = Vec::with_capacity(ns * na);
        let mut transition_center = Vec::with_capacity(ns * na * ns);
        let mut transition_rad = Vec::with_capacity(ns * na);
        for s in 0..ns {
            for a in 0..na {
                let n = self.stats.n(s, a);
                reward_center.push(self.stats.reward_estimate(s, a));
                reward_rad.push(reward_radius(ns, na, t, self.config.delta, n, self.stats.presence(s, a), d_term));
                transition_center.extend(self.stats.transition_estimate(s, a));
                transition_rad.push(transition_radius(ns, na, t, self.config.delta, n));
            }
        }
        ConfidenceSet::new(ns, na, reward_center, reward_rad, transition_center, transition_rad)
            .expect("statistics always produce a well-formed confidence set")
    }

    /// Closes the open epoch (if any), starts epoch `k + 1` at time `t`, and
    /// solves the new confidence set with `epsilon = 1 / sqrt(t)`.
    pub fn begin_epoch(&mut self, t: u64) -> Result<(), LearnerError> {
        if t == 0 || (self.stats.epoch_index > 0 && t <= self.stats.epoch_start) || self.finished {
            return Err(LearnerError::InvalidEpochStart { t, current: self.stats.epoch_start });
        }
        self.close_epoch();
        self.stats.epoch_index += 1;
        self.stats.epoch_start = t;

        let cs = self.build_confidence_set(t);
        let options = EviOptions {
            epsilon: 1.0 / (t as f64).sqrt(),
            iteration_cap: self.config.evi_iteration_cap,
            clip_reward: self.config.clip_optimistic_reward,
        };
        let result = extended_value_iteration(&cs, options)
            .map_err(|source| LearnerError::EviNoConvergence { t, source })?;

        let max_of = |f: &dyn Fn(usize, usize) -> f64| {
            (0..self.num_states)
                .flat_map(|s| (0..self.num_actions).map(move |a| (s, a)))
                .map(|(s, a)| f(s, a))
                .fold(0.0, f64::max)
        };
        self.epochs.push(EpochRecord {
            epoch: self.stats.epoch_index,
            start: t,
            gain: result.gain_estimate,
            policy: result.policy.actions().to_vec(),
            max_reward_radius: max_of(&|s, a| cs.reward_radius(s, a)),
            max_transition_radius: max_of(&|s, a| cs.transition_radius(s, a)),
            evi_iterations: result.iterations,
        });
        self.current_gain = result.gain_estimate;
        self.current_policy = Some(result.policy);
        self.current_set = Some(cs);
        Ok(())
    }

    /// `pi~_k(s)`.
    ///
    /// # Panics
    /// Before the first call to [`Self::begin_epoch`].
    pub fn act(&self, s: usize) -> usize {
        self.current_policy.as_ref().expect("no epoch has begun").action(s)
    }

    /// Whether the open epoch must end before acting at `s`:
    /// `nu_k(s, pi(s)) >= max(1, N_k(s, pi(s)))`. True before the first epoch.
    pub fn epoch_should_end(&self, s: usize) -> bool {
        let Some(policy) = &self.current_policy else {
            return true;
        };
        let a = policy.action(s);
        self.stats.nu(s, a) >= self.stats.n(s, a).max(1)
    }

    /// Books one step: `(s, a)` was played, `x` observed, `s_next` reached.
    /// The whole vector `x` is banked per state for attribution at epoch close.
    pub fn record(&mut self, s: usize, a: usize, x: &[f64], s_next: usize) -> Result<(), LearnerError> {
        let expected = self.act(s);
        if a != expected {
            return Err(LearnerError::PolicyMismatch { state: s, action: a, expected });
        }
        let p = s * self.num_actions + a;
        self.stats.visit_count_epoch[p] += 1;
        self.stats.transition_counts[p * self.num_states + s_next] += 1;
        self.epoch_action[s] = Some(a);
        for (acc, &v) in self.epoch_observed.iter_mut().zip(x) {
            *acc += v;
        }
        Ok(())
    }

    /// Folds the final, possibly truncated epoch into the statistics for
    /// reporting. No policy is computed; further epochs are refused.
    pub fn finish(&mut self) {
        if !self.finished {
            self.close_epoch();
            self.finished = true;
        }
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn learner(s: usize, a: usize, d_hat: f64) -> Learner {
        let mut cfg = LearnerConfig::new(0.1, d_hat);
        cfg.record_presence_history = true;
        Learner::new(s, a, cfg).unwrap()
    }

    #[test]
    fn first_epoch_radii() {
        let mut l = learner(2, 2, 3.0);
        l.begin_epoch(1).unwrap();
        let cs = l.confidence_set().unwrap();
        // sqrt(3.5 ln 80) = 3.91626...
        let expected = (3.5f64 * 80f64.ln()).sqrt();
        assert!((cs.reward_radius(0, 0) - expected).abs() < 1e-12);
        assert!((expected - 3.916_260_106).abs() < 1e-8);
        let expected_p = (14.0f64 * 2.0 * 40f64.ln()).sqrt();
        assert!((cs.transition_radius(1, 1) - expected_p).abs() < 1e-12);
        assert_eq!(cs.reward_center(0, 1), 0.0);
    }

    #[test]
    fn zero_d_hat_matches_baseline_radii() {
        let mut a = learner(3, 2, 0.0);
        let mut cfg = LearnerConfig::new(0.1, 5.0);
        cfg.mode = Mode::DelayNaiveBaseline;
        let mut b = Learner::new(3, 2, cfg).unwrap();
        a.begin_epoch(1).unwrap();
        b.begin_epoch(1).unwrap();
        assert_eq!(a.confidence_set(), b.confidence_set());
    }

    #[test]
    fn presence_counts_once_per_epoch() {
        // one state, one action, so every step revisits the same pair
        let mut l = learner(1, 1, 1.0);
        l.begin_epoch(1).unwrap();
        l.record(0, 0, &[0.5], 0).unwrap();
        assert!(l.epoch_should_end(0));
        l.begin_epoch(2).unwrap();
        assert_eq!(l.stats().presence(0, 0), 1);
        assert_eq!(l.stats().n(0, 0), 1);
        l.record(0, 0, &[0.5], 0).unwrap();
        l.begin_epoch(3).unwrap();
        l.record(0, 0, &[0.25], 0).unwrap();
        assert!(!l.epoch_should_end(0));
        l.record(0, 0, &[0.25], 0).unwrap();
        assert!(l.epoch_should_end(0));
        l.begin_epoch(5).unwrap();
        assert_eq!(l.stats().presence(0, 0), 3);
        assert_eq!(l.stats().n(0, 0), 4);
        assert!((l.stats().reward_estimate(0, 0) - 1.5 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn unvisited_states_credit_nothing() {
        let mut l = learner(2, 1, 0.0);
        l.begin_epoch(1).unwrap();
        // mass shows up at state 1, which is never visited this epoch
        l.record(0, 0, &[0.0, 0.7], 0).unwrap();
        l.begin_epoch(2).unwrap();
        assert_eq!(l.stats().reward_sum_attributed, vec![0.0, 0.0]);
        assert_eq!(l.stats().presence(1, 0), 0);
    }

    #[test]
    fn policy_mismatch_is_rejected() {
        let mut l = learner(1, 2, 0.0);
        l.begin_epoch(1).unwrap();
        let other = 1 - l.act(0);
        assert!(matches!(l.record(0, other, &[0.0], 0), Err(LearnerError::PolicyMismatch { .. })));
    }

    #[test]
    fn act_is_stable_within_an_epoch() {
        let mut l = learner(3, 1, 0.0);
        l.begin_epoch(1).unwrap();
        assert_eq!(l.act(2), 0);
        assert_eq!(l.act(2), l.act(2));
    }

    #[test]
    fn doubling_epochs_for_one_pair() {
        let mut l = learner(1, 1, 0.0);
        let mut lengths = Vec::new();
        let mut current = 0u64;
        for t in 1..=64u64 {
            if l.epoch_should_end(0) {
                if current > 0 {
                    lengths.push(current);
                }
                l.begin_epoch(t).unwrap();
                current = 0;
            }
            l.record(0, 0, &[1.0], 0).unwrap();
            current += 1;
        }
        assert_eq!(lengths, vec![1, 1, 2, 4, 8, 16]);
    }

    #[test]
    fn epoch_starts_must_increase() {
        let mut l = learner(1, 1, 0.0);
        assert!(l.begin_epoch(0).is_err());
        l.begin_epoch(3).unwrap();
        assert!(l.begin_epoch(3).is_err());
        l.finish();
        assert!(l.begin_epoch(9).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(Learner::new(1, 1, LearnerConfig::new(1.0, 0.0)).is_err());
        assert!(Learner::new(1, 1, LearnerConfig::new(0.1, -1.0)).is_err());
    }

    #[test]
    fn misspecification_labels() {
        assert_eq!(misspecification_report(3.0, 3.0), Misspecification::Exact);
        assert_eq!(misspecification_report(6.0, 3.0), Misspecification::OverEstimated);
        assert_eq!(misspecification_report(0.0, 3.0), Misspecification::UnderEstimated);
    }
}
