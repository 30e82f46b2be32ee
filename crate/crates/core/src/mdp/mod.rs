//! Tabular average-reward MDPs and exact solvers.
//!
//! [`TabularMdp`] is the ground-truth model. Construction always goes through
//! [`RawMdp::validate`], which reports every violated invariant at once.

mod generators;
mod solve;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generators::{random_dense, riverswim, two_state};
pub use solve::{
    diameter, hitting_time_matrix, min_expected_hitting_time, optimal_gain, policy_gain,
    SolveReport, DEFAULT_SWEEP_CAP,
};
pub(crate) use solve::increment_bounds as solve_increment_bounds;

/// Absolute tolerance on transition row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("table shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("no convergence after {iterations} sweeps (span residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("infinite diameter: state {to} cannot be reached from state {from} under any policy")]
    InfiniteDiameter { from: usize, to: usize },
    #[error("target state {target} unreachable from state {from}")]
    Unreachable { from: usize, target: usize },
    #[error("policy does not match the model: {0}")]
    InvalidPolicy(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// One broken invariant found by validation.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonStochasticRow { state: usize, action: usize, sum: f64 },
    NegativeProbability { state: usize, action: usize, next: usize, value: f64 },
    RewardOutOfRange { state: usize, action: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonStochasticRow { state, action, sum } => {
                write!(f, "transition row ({state},{action}) sums to {sum}")
            }
            Self::NegativeProbability { state, action, next, value } => {
                write!(f, "p({next}|{state},{action}) = {value} is negative")
            }
            Self::RewardOutOfRange { state, action, value } => {
                write!(f, "reward ({state},{action}) = {value} outside [0,1]")
            }
        }
    }
}

/// Unvalidated tables, exactly as stored in an MDP file.
///
/// `transition` holds `num_states * num_actions` rows, row `s * num_actions + a`
/// being `p(.|s,a)`. `reward` holds `num_states` rows of `num_actions` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub transition: Vec<Vec<f64>>,
    pub reward: Vec<Vec<f64>>,
}

impl RawMdp {
    pub fn validate(self) -> Result<TabularMdp, MdpError> {
        let (s_count, a_count) = (self.num_states, self.num_actions);
        if s_count == 0 || a_count == 0 {
            return Err(MdpError::Shape("num_states and num_actions must be at least 1".into()));
        }
        if self.transition.len() != s_count * a_count {
            return Err(MdpError::Shape(format!(
                "expected {} transition rows, found {}",
                s_count * a_count,
                self.transition.len()
            )));
        }
        if let Some((i, row)) = self.transition.iter().enumerate().find(|(_, r)| r.len() != s_count) {
            return Err(MdpError::Shape(format!(
                "transition row {i} has {} entries, expected {s_count}",
                row.len()
            )));
        }
        if self.reward.len() != s_count {
            return Err(MdpError::Shape(format!(
                "expected {s_count} reward rows, found {}",
                self.reward.len()
            )));
        }
        if let Some((i, row)) = self.reward.iter().enumerate().find(|(_, r)| r.len() != a_count) {
            return Err(MdpError::Shape(format!(
                "reward row {i} has {} entries, expected {a_count}",
                row.len()
            )));
        }

        let mut violations = Vec::new();
        for (row_index, row) in self.transition.iter().enumerate() {
            let (state, action) = (row_index / a_count, row_index % a_count);
            for (next, &value) in row.iter().enumerate() {
                if value < 0.0 || value.is_nan() {
                    violations.push(Violation::NegativeProbability { state, action, next, value });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
                violations.push(Violation::NonStochasticRow { state, action, sum });
            }
        }
        for (state, row) in self.reward.iter().enumerate() {
            for (action, &value) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    violations.push(Violation::RewardOutOfRange { state, action, value });
                }
            }
        }
        if !violations.is_empty() {
            return Err(MdpError::Invalid(violations));
        }

        Ok(TabularMdp {
            num_states: s_count,
            num_actions: a_count,
            transition: self.transition.into_iter().flatten().collect(),
            reward: self.reward.into_iter().flatten().collect(),
        })
    }
}

/// A validated finite MDP: `S` states, `A` actions, `p(.|s,a)` and `r(s,a) in [0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
}

impl TabularMdp {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `p(.|s,a)`.
    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    /// `r(s,a)`.
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    /// Row-major `(s,a)` reward table.
    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    /// Row-major `(s,a,s')` transition table.
    pub fn transition_table(&self) -> &[f64] {
        &self.transition
    }

    pub fn to_raw(&self) -> RawMdp {
        RawMdp {
            num_states: self.num_states,
            num_actions: self.num_actions,
            transition: self.transition.chunks(self.num_states).map(<[f64]>::to_vec).collect(),
            reward: self.reward.chunks(self.num_actions).map(<[f64]>::to_vec).collect(),
        }
    }

    /// Relabels states so that old state `s` becomes `perm[s]`.
    pub fn permute_states(&self, perm: &[usize]) -> TabularMdp {
        let (n, k) = (self.num_states, self.num_actions);
        assert_eq!(perm.len(), n, "permutation length");
        let mut transition = vec![0.0; n * k * n];
        let mut reward = vec![0.0; n * k];
        for s in 0..n {
            for a in 0..k {
                reward[perm[s] * k + a] = self.reward(s, a);
                for (next, &p) in self.transition(s, a).iter().enumerate() {
                    transition[(perm[s] * k + a) * n + perm[next]] = p;
                }
            }
        }
        TabularMdp { num_states: n, num_actions: k, transition, reward }
    }
}

/// A deterministic stationary policy `state -> action`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationaryPolicy {
    action_of: Vec<usize>,
}

impl StationaryPolicy {
    pub fn new(action_of: Vec<usize>) -> Self {
        Self { action_of }
    }

    /// The policy playing `action` everywhere.
    pub fn constant(num_states: usize, action: usize) -> Self {
        Self { action_of: vec![action; num_states] }
    }

    pub fn action(&self, s: usize) -> usize {
        self.action_of[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.action_of
    }

    pub fn len(&self) -> usize {
        self.action_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.action_of.is_empty()
    }

    pub fn check(&self, mdp: &TabularMdp) -> Result<(), MdpError> {
        if self.action_of.len() != mdp.num_states() {
            return Err(MdpError::InvalidPolicy(format!(
                "policy covers {} states, model has {}",
                self.action_of.len(),
                mdp.num_states()
            )));
        }
        if let Some((s, &a)) = self.action_of.iter().enumerate().find(|(_, &a)| a >= mdp.num_actions()) {
            return Err(MdpError::InvalidPolicy(format!("action {a} at state {s} out of range")));
        }
        Ok(())
    }

    /// All `A^S` deterministic policies in lexicographic order.
    pub fn enumerate(num_states: usize, num_actions: usize) -> impl Iterator<Item = StationaryPolicy> {
        let total = num_actions.pow(num_states as u32);
        (0..total).map(move |mut code| {
            let mut action_of = vec![0; num_states];
            for slot in action_of.iter_mut() {
                *slot = code % num_actions;
                code /= num_actions;
            }
            StationaryPolicy { action_of }
        })
    }
}
