//! Delayed, composite reward generation and the per-state observation buffer.
//!
//! Each visit to `(s,a)` emits a [`RewardSequence`]: a total drawn from a
//! [`TotalLaw`] with mean `r(s,a)`, spread over future offsets by a
//! [`DelayProfile`]. Emissions are queued per state in a
//! [`PendingRewardBuffer`]; at each instant the learner only sees, for every
//! state, the sum of the mass falling due, with no attribution to the action
//! or time that produced it.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::TabularMdp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid delay profile: {0}")]
    InvalidProfile(String),
    #[error("pair ({state},{action}) outside the model")]
    PairOutOfRange { state: usize, action: usize },
    #[error("nominal spillover {0} must be positive and finite")]
    InvalidNominal(f64),
}

/// How the total `||r_t(s,a)||_1` is distributed around its mean `r(s,a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TotalLaw {
    /// Total in `{0, 1}` with `P(1) = r(s,a)`.
    #[default]
    Bernoulli,
    /// Total equal to `r(s,a)` every time.
    Constant,
    /// Uniform on `[0, 2r]` when `r <= 1/2`, else on `[2r - 1, 1]`.
    Uniform,
}

impl TotalLaw {
    fn support(self, mean: f64) -> (f64, f64) {
        match self {
            Self::Bernoulli => (0.0, if mean > 0.0 { 1.0 } else { 0.0 }),
            Self::Constant => (mean, mean),
            Self::Uniform if mean <= 0.5 => (0.0, 2.0 * mean),
            Self::Uniform => (2.0 * mean - 1.0, 1.0),
        }
    }

    /// Largest total this law can produce for mean `mean`.
    pub fn max_total(self, mean: f64) -> f64 {
        self.support(mean).1
    }

    pub fn sample<R: Rng + ?Sized>(self, mean: f64, rng: &mut R) -> f64 {
        match self {
            Self::Bernoulli => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Constant => mean,
            Self::Uniform => {
                let (lo, hi) = self.support(mean);
                lo + (hi - lo) * rng.random::<f64>()
            }
        }
    }
}

/// How one emission's total is spread across future offsets.
///
/// Widths count slots: offset `tau` is realised `tau` steps after emission and
/// every profile except [`DelayProfile::UnboundedGeometric`] puts zero mass on
/// `tau >= width`.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayProfile {
    /// All mass at offset 0.
    Immediate,
    /// All mass at `offset`; `width >= offset + 1`.
    FixedDelay { offset: usize, width: usize },
    /// Equal mass on offsets `0..width`.
    UniformWindow { width: usize },
    /// Mass proportional to `2^{-1-tau}` on `0..width`, renormalised.
    Dyadic { width: usize },
    /// All mass at a random offset `k < width`, `P(k)` proportional to `ratio^k`.
    TruncatedGeometric { width: usize, ratio: f64 },
    /// All mass at a random offset `k >= 0` with `P(k) = (1 - ratio) ratio^k`.
    /// Admits no finite spillover bound; only for negative tests.
    UnboundedGeometric { ratio: f64 },
}

impl DelayProfile {
    pub fn fixed_delay(offset: usize) -> Self {
        Self::FixedDelay { offset, width: offset + 1 }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: String| Err(ChannelError::InvalidProfile(m));
        match *self {
            Self::Immediate => Ok(()),
            Self::FixedDelay { offset, width } if width <= offset => {
                bad(format!("fixed delay offset {offset} needs support width > {offset}, got {width}"))
            }
            Self::UniformWindow { width } | Self::Dyadic { width } | Self::TruncatedGeometric { width, .. }
                if width == 0 =>
            {
                bad("support width must be at least 1".into())
            }
            Self::TruncatedGeometric { ratio, .. } | Self::UnboundedGeometric { ratio }
                if !(ratio > 0.0 && ratio < 1.0) =>
            {
                bad(format!("geometric ratio {ratio} outside (0,1)"))
            }
            Self::Dyadic { width } if width > 1000 => bad(format!("dyadic width {width} exceeds 1000")),
            _ => Ok(()),
        }
    }

    /// Number of slots, `None` when unbounded.
    pub fn support_width(&self) -> Option<usize> {
        match *self {
            Self::Immediate => Some(1),
            Self::FixedDelay { width, .. }
            | Self::UniformWindow { width }
            | Self::Dyadic { width }
            | Self::TruncatedGeometric { width, .. } => Some(width),
            Self::UnboundedGeometric { .. } => None,
        }
    }

    /// Per-offset weights for profiles whose shape does not depend on chance.
    fn deterministic_weights(&self) -> Option<Vec<f64>> {
        match *self {
            Self::Immediate => Some(vec![1.0]),
            Self::FixedDelay { offset, width } => {
                let mut w = vec![0.0; width];
                w[offset] = 1.0;
                Some(w)
            }
            Self::UniformWindow { width } => Some(vec![1.0 / width as f64; width]),
            Self::Dyadic { width } => {
                let norm = 1.0 - 0.5f64.powi(width as i32);
                Some((0..width).map(|tau| 0.5f64.powi(tau as i32 + 1) / norm).collect())
            }
            Self::TruncatedGeometric { .. } | Self::UnboundedGeometric { .. } => None,
        }
    }

    /// Supremum over realisations of the unit-total tail `sum_{tau >= tau1} w_tau`,
    /// for each `tau1` in `0..width`. `None` when unbounded.
    pub fn worst_tail(&self) -> Option<Vec<f64>> {
        match *self {
            Self::TruncatedGeometric { width, .. } => Some(vec![1.0; width]),
            Self::UnboundedGeometric { .. } => None,
            _ => {
                let w = self.deterministic_weights()?;
                let mut tail = vec![0.0; w.len()];
                let mut acc = 0.0;
                for tau in (0..w.len()).rev() {
                    acc += w[tau];
                    tail[tau] = acc;
                }
                Some(tail)
            }
        }
    }

    fn sample_offset<R: Rng + ?Sized>(ratio: f64, width: Option<usize>, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mass = width.map_or(1.0, |w| 1.0 - ratio.powi(w as i32));
        let k = ((1.0 - u * mass).ln() / ratio.ln()).floor();
        let k = if k.is_finite() && k >= 0.0 { k as usize } else { 0 };
        width.map_or(k, |w| k.min(w - 1))
    }

    /// Writes the components of an emission with the given total into `out`.
    pub fn spread<R: Rng + ?Sized>(&self, total: f64, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        match *self {
            Self::Immediate => out.push(total),
            Self::FixedDelay { offset, .. } => {
                out.resize(offset, 0.0);
                out.push(total);
            }
            Self::UniformWindow { width } => out.resize(width, total / width as f64),
            Self::Dyadic { .. } => {
                let w = self.deterministic_weights().expect("deterministic");
                out.extend(w.into_iter().map(|w| w * total));
            }
            Self::TruncatedGeometric { width, ratio } => {
                let k = Self::sample_offset(ratio, Some(width), rng);
                out.resize(k, 0.0);
                out.push(total);
            }
            Self::UnboundedGeometric { ratio } => {
                let k = Self::sample_offset(ratio, None, rng);
                out.resize(k, 0.0);
                out.push(total);
            }
        }
    }
}

/// Components of one emission; entry `tau` is realised `tau` steps later.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RewardSequence {
    components: Vec<f64>,
}

impl RewardSequence {
    pub fn new(components: Vec<f64>) -> Self {
        Self { components }
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn total(&self) -> f64 {
        self.components.iter().sum()
    }

    /// `sum_{tau >= tau1} r_tau`.
    pub fn tail(&self, tau1: usize) -> f64 {
        self.components.iter().skip(tau1).sum()
    }

    /// `sum_{tau1 >= 0} tail(tau1)`, i.e. `sum_tau (tau + 1) r_tau`.
    pub fn spillover(&self) -> f64 {
        self.components.iter().enumerate().map(|(tau, &c)| (tau + 1) as f64 * c).sum()
    }
}

/// `sum_{tau1 >= 0} max_i tail_i(tau1)` over sequences drawn at the same instant.
pub fn joint_spillover(sequences: &[RewardSequence]) -> f64 {
    let len = sequences.iter().map(|s| s.components.len()).max().unwrap_or(0);
    (0..len).map(|tau1| sequences.iter().map(|s| s.tail(tau1)).fold(0.0, f64::max)).sum()
}

/// A validated reward channel bound to a model's mean rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSequenceSpec {
    num_states: usize,
    num_actions: usize,
    mean_reward: Vec<f64>,
    law: TotalLaw,
    profiles: Vec<DelayProfile>,
    declared_spillover: f64,
}

impl RewardSequenceSpec {
    /// One profile shared by every pair. The declared spillover is the
    /// certified bound (infinite for an unbounded profile until
    /// [`Self::with_nominal_spillover`] is applied).
    pub fn new(mdp: &TabularMdp, profile: DelayProfile, law: TotalLaw) -> Result<Self, ChannelError> {
        profile.validate()?;
        let pairs = mdp.num_states() * mdp.num_actions();
        let mut spec = Self {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            mean_reward: mdp.reward_table().to_vec(),
            law,
            profiles: vec![profile; pairs],
            declared_spillover: 0.0,
        };
        spec.declared_spillover = spec.spillover_bound();
        Ok(spec)
    }

    /// Replaces the profile of a single pair.
    pub fn with_override(mut self, state: usize, action: usize, profile: DelayProfile) -> Result<Self, ChannelError> {
        if state >= self.num_states || action >= self.num_actions {
            return Err(ChannelError::PairOutOfRange { state, action });
        }
        profile.validate()?;
        self.profiles[state * self.num_actions + action] = profile;
        self.declared_spillover = self.spillover_bound();
        Ok(self)
    }

    /// Declares `d` for a channel the crate cannot certify.
    pub fn with_nominal_spillover(mut self, d: f64) -> Result<Self, ChannelError> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(ChannelError::InvalidNominal(d));
        }
        self.declared_spillover = d;
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn law(&self) -> TotalLaw {
        self.law
    }

    pub fn profile(&self, state: usize, action: usize) -> &DelayProfile {
        &self.profiles[state * self.num_actions + action]
    }

    pub fn mean_reward(&self, state: usize, action: usize) -> f64 {
        self.mean_reward[state * self.num_actions + action]
    }

    pub fn declared_spillover(&self) -> f64 {
        self.declared_spillover
    }

    /// Whether every pair has a finite support width.
    pub fn is_certified(&self) -> bool {
        self.profiles.iter().all(|p| p.support_width().is_some())
    }

    /// Largest support width over pairs, `None` when some pair is unbounded.
    pub fn support_width(&self) -> Option<usize> {
        self.profiles.iter().map(DelayProfile::support_width).try_fold(0, |acc, w| w.map(|w| acc.max(w)))
    }

    /// Tightest certified `d`: `sum_{tau1} max_{(s,a)} sup tail_{tau1}(s,a)`,
    /// with each pair's worst tail scaled by its largest possible total.
    pub fn spillover_bound(&self) -> f64 {
        let mut envelope: Vec<f64> = Vec::new();
        for (pair, profile) in self.profiles.iter().enumerate() {
            let Some(tail) = profile.worst_tail() else {
                return f64::INFINITY;
            };
            let scale = self.law.max_total(self.mean_reward[pair]);
            if envelope.len() < tail.len() {
                envelope.resize(tail.len(), 0.0);
            }
            for (slot, t) in envelope.iter_mut().zip(tail) {
                *slot = slot.max(scale * t);
            }
        }
        envelope.iter().sum()
    }

    /// Draws a fresh sequence for `(state, action)`.
    pub fn sample_sequence<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> RewardSequence {
        let mut out = Vec::new();
        self.sample_into(state, action, rng, &mut out);
        RewardSequence { components: out }
    }

    /// Allocation-free variant of [`Self::sample_sequence`].
    pub fn sample_into<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R, out: &mut Vec<f64>) {
        let total = self.law.sample(self.mean_reward(state, action), rng);
        self.profile(state, action).spread(total, rng, out);
    }
}

/// Free-function form of [`RewardSequenceSpec::spillover_bound`].
pub fn spillover_bound(spec: &RewardSequenceSpec) -> f64 {
    spec.spillover_bound()
}

/// Per-state queues of reward mass not yet realised.
///
/// Slot 0 of each queue holds the mass due at the next call to [`Self::observe`].
#[derive(Debug, Clone, PartialEq)]
pub struct PendingRewardBuffer {
    queues: Vec<VecDeque<f64>>,
    current_time: u64,
}

impl PendingRewardBuffer {
    pub fn new(num_states: usize) -> Self {
        Self { queues: vec![VecDeque::new(); num_states], current_time: 0 }
    }

    pub fn num_states(&self) -> usize {
        self.queues.len()
    }

    /// Number of completed observations.
    pub fn current_time(&self) -> u64 {
        self.current_time
    }

    /// Schedules `components[tau]` under `state`, `tau` observations from now
    /// (offset 0 lands in the very next observation).
    pub fn push(&mut self, state: usize, components: &[f64]) {
        let queue = &mut self.queues[state];
        if queue.len() < components.len() {
            queue.resize(components.len(), 0.0);
        }
        for (slot, &c) in queue.iter_mut().zip(components) {
            debug_assert!(c >= 0.0, "negative reward component");
            *slot += c;
        }
    }

    pub fn push_sequence(&mut self, state: usize, sequence: &RewardSequence) {
        self.push(state, sequence.components());
    }

    /// Removes and returns the mass due now, one entry per state, and advances time.
    pub fn observe(&mut self) -> Vec<f64> {
        let mut x = vec![0.0; self.queues.len()];
        self.observe_into(&mut x);
        x
    }

    pub fn observe_into(&mut self, x: &mut [f64]) {
        for (slot, queue) in x.iter_mut().zip(self.queues.iter_mut()) {
            *slot = queue.pop_front().unwrap_or(0.0);
        }
        self.current_time += 1;
    }

    /// Total mass still queued.
    pub fn total_mass(&self) -> f64 {
        self.queues.iter().flat_map(|q| q.iter()).sum()
    }

    pub fn state_mass(&self, state: usize) -> f64 {
        self.queues[state].iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(|q| q.iter().all(|&m| m == 0.0))
    }
}
