//! The interaction loop between a learner and the true model.
//!
//! [`Environment`] is owned by the harness. Learner-side code is handed a
//! [`LearnerPort`], which only exposes the current state and
//! [`LearnerPort::step`]; the [`GroundTruthLedger`] and the buffered reward
//! mass are reachable only through the `Environment` itself.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::channel::{PendingRewardBuffer, RewardSequenceSpec};
use crate::mdp::TabularMdp;
use crate::rng::{stream, SimRng, StreamRole};

/// Default ring size for opt-in per-step traces.
pub const DEFAULT_TRACE_CAPACITY: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("initial state {state} out of range (model has {num_states} states)")]
    InvalidInitialState { state: usize, num_states: usize },
    #[error("action {action} out of range (model has {num_actions} actions)")]
    InvalidAction { action: usize, num_actions: usize },
    #[error("channel was built for a {0}x{1} model, environment model is {2}x{3}")]
    ChannelMismatch(usize, usize, usize, usize),
}

/// What the learner sees after acting: `x_t` and `s_{t+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub next_state: usize,
}

/// One emitted sequence, retained for harness-side probes.
#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub state: usize,
    pub action: usize,
    pub components: Vec<f64>,
}

/// Ground-truth accounting, never shown to the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLedger {
    num_actions: usize,
    /// Running sum of emission totals.
    pub generated_total: f64,
    per_pair_sum: Vec<f64>,
    per_pair_count: Vec<u64>,
    trace: Option<TraceRing>,
}

/// Bounded per-step record of `(state, action, generated mass)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRing {
    capacity: usize,
    entries: VecDeque<(usize, usize, f64)>,
}

impl TraceRing {
    pub fn entries(&self) -> impl Iterator<Item = &(usize, usize, f64)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl GroundTruthLedger {
    fn new(num_states: usize, num_actions: usize, trace_capacity: Option<usize>) -> Self {
        Self {
            num_actions,
            generated_total: 0.0,
            per_pair_sum: vec![0.0; num_states * num_actions],
            per_pair_count: vec![0; num_states * num_actions],
            trace: trace_capacity.map(|capacity| TraceRing { capacity, entries: VecDeque::new() }),
        }
    }

    fn record(&mut self, state: usize, action: usize, total: f64) {
        let pair = state * self.num_actions + action;
        self.generated_total += total;
        self.per_pair_sum[pair] += total;
        self.per_pair_count[pair] += 1;
        if let Some(ring) = &mut self.trace {
            if ring.entries.len() == ring.capacity {
                ring.entries.pop_front();
            }
            ring.entries.push_back((state, action, total));
        }
    }

    /// Sum of emission totals of `(state, action)` so far.
    pub fn pair_sum(&self, state: usize, action: usize) -> f64 {
        self.per_pair_sum[state * self.num_actions + action]
    }

    /// Number of emissions of `(state, action)` so far.
    pub fn pair_count(&self, state: usize, action: usize) -> u64 {
        self.per_pair_count[state * self.num_actions + action]
    }

    pub fn total_count(&self) -> u64 {
        self.per_pair_count.iter().sum()
    }

    pub fn trace(&self) -> Option<&TraceRing> {
        self.trace.as_ref()
    }
}

/// The true model, its reward channel, and the simulation state.
#[derive(Debug, Clone)]
pub struct Environment {
    model: TabularMdp,
    channel: RewardSequenceSpec,
    buffer: PendingRewardBuffer,
    current_state: usize,
    step_count: u64,
    reward_rng: SimRng,
    transition_rng: SimRng,
    ledger: GroundTruthLedger,
    scratch: Vec<f64>,
    last_emission: Option<Emission>,
    keep_last_emission: bool,
}

impl Environment {
    /// Fresh environment at `initial_state` with an empty buffer.
    pub fn reset(
        model: TabularMdp,
        channel: RewardSequenceSpec,
        initial_state: usize,
        seed: u64,
    ) -> Result<Self, SimError> {
        if initial_state >= model.num_states() {
            return Err(SimError::InvalidInitialState { state: initial_state, num_states: model.num_states() });
        }
        if channel.num_states() != model.num_states() || channel.num_actions() != model.num_actions() {
            return Err(SimError::ChannelMismatch(
                channel.num_states(),
                channel.num_actions(),
                model.num_states(),
                model.num_actions(),
            ));
        }
        let (s, a) = (model.num_states(), model.num_actions());
        Ok(Self {
            buffer: PendingRewardBuffer::new(s),
            ledger: GroundTruthLedger::new(s, a, None),
            model,
            channel,
            current_state: initial_state,
            step_count: 0,
            reward_rng: stream(seed, StreamRole::Rewards),
            transition_rng: stream(seed, StreamRole::Transitions),
            scratch: Vec::new(),
            last_emission: None,
            keep_last_emission: false,
        })
    }

    /// Retains the last `capacity` steps in the ledger's trace ring.
    pub fn with_trace(mut self, capacity: usize) -> Self {
        let (s, a) = (self.model.num_states(), self.model.num_actions());
        let mut ledger = GroundTruthLedger::new(s, a, Some(capacity));
        ledger.generated_total = self.ledger.generated_total;
        ledger.per_pair_sum = self.ledger.per_pair_sum.clone();
        ledger.per_pair_count = self.ledger.per_pair_count.clone();
        self.ledger = ledger;
        self
    }

    /// Keeps a copy of each step's emitted sequence for [`Self::last_emission`].
    pub fn with_emission_capture(mut self) -> Self {
        self.keep_last_emission = true;
        self
    }

    pub fn model(&self) -> &TabularMdp {
        &self.model
    }

    pub fn channel(&self) -> &RewardSequenceSpec {
        &self.channel
    }

    pub fn current_state(&self) -> usize {
        self.current_state
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Executes `action` in the current state:
    /// emit and queue a sequence, observe `x_t` (including the new offset-0
    /// mass), book the full total in the ledger, then move to the next state.
    pub fn step(&mut self, action: usize) -> Result<StepOutcome, SimError> {
        let mut observation = vec![0.0; self.model.num_states()];
        let next_state = self.step_into(action, &mut observation)?;
        Ok(StepOutcome { observation, next_state })
    }

    /// [`Self::step`] writing `x_t` into a caller-provided slice.
    pub fn step_into(&mut self, action: usize, observation: &mut [f64]) -> Result<usize, SimError> {
        if action >= self.model.num_actions() {
            return Err(SimError::InvalidAction { action, num_actions: self.model.num_actions() });
        }
        let state = self.current_state;
        self.channel.sample_into(state, action, &mut self.reward_rng, &mut self.scratch);
        self.buffer.push(state, &self.scratch);
        self.buffer.observe_into(observation);
        let total: f64 = self.scratch.iter().sum();
        self.ledger.record(state, action, total);
        if self.keep_last_emission {
            self.last_emission = Some(Emission { state, action, components: self.scratch.clone() });
        }

        let next_state = sample_row(self.model.transition(state, action), &mut self.transition_rng);
        self.current_state = next_state;
        self.step_count += 1;
        Ok(next_state)
    }

    pub fn ledger_snapshot(&self) -> GroundTruthLedger {
        self.ledger.clone()
    }

    /// Borrowing view of the ledger, for per-step probes.
    pub fn ledger(&self) -> &GroundTruthLedger {
        &self.ledger
    }

    /// Reward mass emitted but not yet observed.
    pub fn buffered_mass(&self) -> f64 {
        self.buffer.total_mass()
    }

    pub fn last_emission(&self) -> Option<&Emission> {
        self.last_emission.as_ref()
    }

    /// The learner-facing view of this environment.
    pub fn port(&mut self) -> LearnerPort<'_> {
        LearnerPort { env: self }
    }
}

/// Inverse-CDF draw from a distribution row with a single uniform.
fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Everything a learner may touch: the current state and the step call.
pub struct LearnerPort<'a> {
    env: &'a mut Environment,
}

impl LearnerPort<'_> {
    pub fn num_states(&self) -> usize {
        self.env.model.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.env.model.num_actions()
    }

    pub fn state(&self) -> usize {
        self.env.current_state
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome, SimError> {
        self.env.step(action)
    }

    pub fn step_into(&mut self, action: usize, observation: &mut [f64]) -> Result<usize, SimError> {
        self.env.step_into(action, observation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{DelayProfile, TotalLaw};
    use crate::mdp::RawMdp;

    fn one_state(reward: f64) -> TabularMdp {
        RawMdp { num_states: 1, num_actions: 1, transition: vec![vec![1.0]], reward: vec![vec![reward]] }
            .validate()
            .unwrap()
    }

    fn swap() -> TabularMdp {
        RawMdp {
            num_states: 2,
            num_actions: 1,
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            reward: vec![vec![0.5], vec![0.5]],
        }
        .validate()
        .unwrap()
    }

    fn env(model: TabularMdp, profile: DelayProfile, law: TotalLaw, seed: u64) -> Environment {
        let channel = RewardSequenceSpec::new(&model, profile, law).unwrap();
        Environment::reset(model, channel, 0, seed).unwrap()
    }

    #[test]
    fn immediate_channel_is_a_plain_mdp() {
        let mut e = env(one_state(0.4), DelayProfile::Immediate, TotalLaw::Constant, 1);
        for _ in 0..10 {
            assert_eq!(e.step(0).unwrap().observation, vec![0.4]);
        }
    }

    #[test]
    fn delay_pipeline_fills() {
        let mut e = env(one_state(1.0), DelayProfile::fixed_delay(2), TotalLaw::Constant, 1);
        let xs: Vec<f64> = (0..6).map(|_| e.step(0).unwrap().observation[0]).collect();
        assert_eq!(xs, vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn swap_alternates_regardless_of_channel() {
        for profile in [DelayProfile::Immediate, DelayProfile::UniformWindow { width: 5 }] {
            let mut e = env(swap(), profile, TotalLaw::Bernoulli, 9);
            let states: Vec<usize> = (0..6).map(|_| e.step(0).unwrap().next_state).collect();
            assert_eq!(states, vec![1, 0, 1, 0, 1, 0]);
        }
    }

    #[test]
    fn invalid_inputs() {
        let m = one_state(0.5);
        let channel = RewardSequenceSpec::new(&m, DelayProfile::Immediate, TotalLaw::Bernoulli).unwrap();
        assert!(matches!(
            Environment::reset(m.clone(), channel.clone(), 1, 0),
            Err(SimError::InvalidInitialState { .. })
        ));
        let mut e = Environment::reset(m, channel, 0, 0).unwrap();
        assert!(matches!(e.step(1), Err(SimError::InvalidAction { .. })));
        assert_eq!(e.step_count(), 0);
    }

    #[test]
    fn ledger_totals() {
        let mut e = env(one_state(0.4), DelayProfile::Immediate, TotalLaw::Constant, 1);
        assert_eq!(e.ledger_snapshot().generated_total, 0.0);
        for _ in 0..100 {
            e.step(0).unwrap();
        }
        let ledger = e.ledger_snapshot();
        assert!((ledger.generated_total - 40.0).abs() < 1e-9);
        assert_eq!(ledger.pair_count(0, 0), 100);
        assert_eq!(ledger.total_count(), e.step_count());
    }

    #[test]
    fn equal_seeds_give_equal_trajectories() {
        let run = |seed| {
            let model = crate::mdp::two_state();
            let mut e = env(model, DelayProfile::UniformWindow { width: 3 }, TotalLaw::Bernoulli, seed);
            (0..200).map(|t| e.step(t % 2).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn trace_ring_is_bounded() {
        let mut e = env(one_state(0.4), DelayProfile::Immediate, TotalLaw::Constant, 1).with_trace(4);
        for _ in 0..10 {
            e.step(0).unwrap();
        }
        let ledger = e.ledger_snapshot();
        let trace = ledger.trace().unwrap();
        assert_eq!(trace.len(), 4);
        assert!(trace.entries().all(|&(s, a, g)| s == 0 && a == 0 && g == 0.4));
    }

    #[test]
    fn port_exposes_state_and_step() {
        let mut e = env(swap(), DelayProfile::Immediate, TotalLaw::Constant, 1);
        let mut port = e.port();
        assert_eq!(port.state(), 0);
        let out = port.step(0).unwrap();
        assert_eq!(out.next_state, 1);
        assert_eq!(port.state(), 1);
    }

    #[test]
    fn inverse_cdf_skips_zero_entries() {
        let mut rng = stream(0, StreamRole::Transitions);
        for _ in 0..1000 {
            let i = sample_row(&[0.0, 0.3, 0.0, 0.7, 0.0], &mut rng);
            assert!(i == 1 || i == 3);
        }
    }
}
