//! Extended value iteration over an L1 confidence set.
//!
//! Each sweep maximises jointly over actions and over transition rows inside
//! an L1 ball around the empirical row, with the reward taken at the top of its
//! interval (`r_hat + radius`). Iteration stops once the span of the utility
//! increment falls below `epsilon`; the greedy policy of the last sweep is then
//! `epsilon`-optimal for the most optimistic model in the set, provided the set
//! contains a model with finite diameter.

use thiserror::Error;

use crate::mdp::{StationaryPolicy, ROW_SUM_TOLERANCE};

pub const DEFAULT_ITERATION_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EviError {
    #[error("extended value iteration did not converge in {iterations} sweeps (span {span:e})")]
    NoConvergence { iterations: usize, span: f64 },
    #[error("invalid confidence set: {0}")]
    InvalidSet(String),
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
}

/// Plausible models around empirical estimates.
///
/// Tables are row-major over `(s,a)`; `transition_center` is `(s,a,s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    num_states: usize,
    num_actions: usize,
    reward_center: Vec<f64>,
    reward_radius: Vec<f64>,
    transition_center: Vec<f64>,
    transition_radius: Vec<f64>,
}

impl ConfidenceSet {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        reward_center: Vec<f64>,
        reward_radius: Vec<f64>,
        transition_center: Vec<f64>,
        transition_radius: Vec<f64>,
    ) -> Result<Self, EviError> {
        let pairs = num_states * num_actions;
        if num_states == 0 || num_actions == 0 {
            return Err(EviError::InvalidSet("empty state or action space".into()));
        }
        if reward_center.len() != pairs
            || reward_radius.len() != pairs
            || transition_radius.len() != pairs
            || transition_center.len() != pairs * num_states
        {
            return Err(EviError::InvalidSet("table sizes do not match S and A".into()));
        }
        if let Some(i) = reward_center.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(EviError::InvalidSet(format!("reward center {i} is {}", reward_center[i])));
        }
        if reward_radius.iter().chain(&transition_radius).any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(EviError::InvalidSet("radii must be finite and non-negative".into()));
        }
        for (pair, row) in transition_center.chunks(num_states).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(EviError::InvalidSet(format!("transition center {pair} is not a distribution")));
            }
        }
        Ok(Self { num_states, num_actions, reward_center, reward_radius, transition_center, transition_radius })
    }

    /// The singleton set containing exactly `mdp`.
    pub fn exact(mdp: &crate::mdp::TabularMdp) -> Self {
        let pairs = mdp.num_states() * mdp.num_actions();
        Self {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            reward_center: mdp.reward_table().to_vec(),
            reward_radius: vec![0.0; pairs],
            transition_center: mdp.transition_table().to_vec(),
            transition_radius: vec![0.0; pairs],
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

    pub fn reward_center(&self, s: usize, a: usize) -> f64 {
        self.reward_center[self.pair(s, a)]
    }

    pub fn reward_radius(&self, s: usize, a: usize) -> f64 {
        self.reward_radius[self.pair(s, a)]
    }

    pub fn transition_center(&self, s: usize, a: usize) -> &[f64] {
        let start = self.pair(s, a) * self.num_states;
        &self.transition_center[start..start + self.num_states]
    }

    pub fn transition_radius(&self, s: usize, a: usize) -> f64 {
        self.transition_radius[self.pair(s, a)]
    }

    /// Optimistic reward `r_hat + d`, optionally clipped to 1.
    pub fn optimistic_reward(&self, s: usize, a: usize, clip: bool) -> f64 {
        let r = self.reward_center(s, a) + self.reward_radius(s, a);
        if clip {
            r.min(1.0)
        } else {
            r
        }
    }

    /// Same centres, every radius multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor >= 0.0);
        let mut out = self.clone();
        out.reward_radius.iter_mut().for_each(|r| *r *= factor);
        out.transition_radius.iter_mut().for_each(|r| *r *= factor);
        out
    }
}

/// State indices ordered by `u` descending, ties by lowest index first.
pub fn descending_order(u: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&i, &j| u[j].total_cmp(&u[i]));
    order
}

/// Maximiser of `p . u` over distributions within L1 distance `radius` of `center`.
pub fn inner_max(center: &[f64], radius: f64, u: &[f64]) -> Vec<f64> {
    let order = descending_order(u);
    let mut out = vec![0.0; center.len()];
    inner_max_sorted(center, radius, &order, &mut out);
    out
}

/// [`inner_max`] with a precomputed [`descending_order`] of `u`.
///
/// Raises the best state by `min(radius / 2, 1 - p(best))` and removes the same
/// mass from the worst states upward.
pub fn inner_max_sorted(center: &[f64], radius: f64, order: &[usize], out: &mut [f64]) {
    out.copy_from_slice(center);
    let Some(&best) = order.first() else { return };
    let raise = (0.5 * radius.max(0.0)).min(1.0 - out[best]).max(0.0);
    if raise == 0.0 {
        return;
    }
    out[best] += raise;
    let mut excess = raise;
    for &s in order.iter().rev() {
        if s == best {
            continue;
        }
        let take = out[s].min(excess);
        out[s] -= take;
        excess -= take;
        if excess <= 0.0 {
            break;
        }
    }
    if radius >= 2.0 {
        // the ball covers the simplex: the answer is exactly the vertex
        out.iter_mut().for_each(|p| *p = 0.0);
        out[best] = 1.0;
    }
}

/// Options for [`extended_value_iteration`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EviOptions {
    pub epsilon: f64,
    pub iteration_cap: usize,
    /// Clip `r_hat + d` at 1.
    pub clip_reward: bool,
}

impl EviOptions {
    pub fn new(epsilon: f64) -> Self {
        Self { epsilon, iteration_cap: DEFAULT_ITERATION_CAP, clip_reward: false }
    }
}

/// Terminal state of a converged run.
#[derive(Debug, Clone, PartialEq)]
pub struct EviResult {
    /// Terminal utility, re-centred to minimum zero.
    pub utility: Vec<f64>,
    pub policy: StationaryPolicy,
    /// `p~(.|s, pi~(s))`, one row per state.
    pub optimistic_transitions: Vec<Vec<f64>>,
    /// `r~(s,a) = r_hat + d` (row-major over pairs).
    pub optimistic_reward: Vec<f64>,
    /// Midpoint of the final utility increment.
    pub gain_estimate: f64,
    pub iterations: usize,
    pub final_span: f64,
    pub epsilon: f64,
}

/// One extended Bellman sweep: `next(s) = max_a { r~(s,a) + max_p p . u }`.
/// Writes the maximising action of each state into `policy`.
pub fn bellman_sweep(cs: &ConfidenceSet, u: &[f64], clip: bool, next: &mut [f64], policy: &mut [usize]) {
    let order = descending_order(u);
    let mut row = vec![0.0; cs.num_states];
    for s in 0..cs.num_states {
        let mut best = (0, f64::NEG_INFINITY);
        for a in 0..cs.num_actions {
            inner_max_sorted(cs.transition_center(s, a), cs.transition_radius(s, a), &order, &mut row);
            let value = cs.optimistic_reward(s, a, clip) + row.iter().zip(u).map(|(p, u)| p * u).sum::<f64>();
            if value > best.1 {
                best = (a, value);
            }
        }
        next[s] = best.1;
        policy[s] = best.0;
    }
}

/// Runs extended value iteration from `u = 0`.
pub fn extended_value_iteration(cs: &ConfidenceSet, options: EviOptions) -> Result<EviResult, EviError> {
    if !(options.epsilon > 0.0) {
        return Err(EviError::InvalidEpsilon(options.epsilon));
    }
    let n = cs.num_states;
    let mut u = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut policy = vec![0; n];
    let mut span = f64::INFINITY;
    for iteration in 1..=options.iteration_cap {
        bellman_sweep(cs, &u, options.clip_reward, &mut next, &mut policy);
        let (lo, hi) = crate::mdp::solve_increment_bounds(&u, &next);
        span = hi - lo;
        if span < options.epsilon {
            // maximising rows are taken against the utility the last sweep used
            let order = descending_order(&u);
            let optimistic_transitions = (0..n)
                .map(|s| {
                    let mut row = vec![0.0; n];
                    inner_max_sorted(cs.transition_center(s, policy[s]), cs.transition_radius(s, policy[s]), &order, &mut row);
                    row
                })
                .collect();
            let floor = next.iter().copied().fold(f64::INFINITY, f64::min);
            let optimistic_reward = (0..n)
                .flat_map(|s| (0..cs.num_actions).map(move |a| (s, a)))
                .map(|(s, a)| cs.optimistic_reward(s, a, options.clip_reward))
                .collect();
            return Ok(EviResult {
                utility: next.iter().map(|v| v - floor).collect(),
                policy: StationaryPolicy::new(policy),
                optimistic_transitions,
                optimistic_reward,
                gain_estimate: 0.5 * (hi + lo),
                iterations: iteration,
                final_span: span,
                epsilon: options.epsilon,
            });
        }
        let floor = next.iter().copied().fold(f64::INFINITY, f64::min);
        for (dst, &v) in u.iter_mut().zip(&next) {
            *dst = v - floor;
        }
    }
    Err(EviError::NoConvergence { iterations: options.iteration_cap, span })
}

/// A converged result's gain next to a fresh one-sweep recomputation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCertificate {
    pub gain: f64,
    pub recomputed_gain: f64,
    /// Span of the recomputed increment.
    pub recomputed_span: f64,
}

impl GainCertificate {
    /// `|recomputed - gain| < epsilon`.
    pub fn holds(&self, epsilon: f64) -> bool {
        (self.recomputed_gain - self.gain).abs() < epsilon
    }
}

/// Re-runs one sweep from the terminal utility to confirm the stopping rule.
pub fn gain_certificate(result: &EviResult, cs: &ConfidenceSet, clip_reward: bool) -> GainCertificate {
    let n = cs.num_states;
    let mut next = vec![0.0; n];
    let mut policy = vec![0; n];
    bellman_sweep(cs, &result.utility, clip_reward, &mut next, &mut policy);
    let (lo, hi) = crate::mdp::solve_increment_bounds(&result.utility, &next);
    GainCertificate { gain: result.gain_estimate, recomputed_gain: 0.5 * (hi + lo), recomputed_span: hi - lo }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(r: f64, reward_radius: f64) -> ConfidenceSet {
        ConfidenceSet::new(1, 1, vec![r], vec![reward_radius], vec![1.0], vec![0.3]).unwrap()
    }

    #[test]
    fn zero_radius_keeps_center() {
        let c = [0.2, 0.5, 0.3];
        assert_eq!(inner_max(&c, 0.0, &[3.0, 1.0, 2.0]), c.to_vec());
    }

    #[test]
    fn half_ball_moves_mass_to_best() {
        let p = inner_max(&[0.5, 0.5], 0.4, &[1.0, 0.0]);
        assert!((p[0] - 0.7).abs() < 1e-15 && (p[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn full_ball_is_a_vertex() {
        assert_eq!(inner_max(&[0.2, 0.3, 0.5], 2.0, &[1.0, 4.0, 4.0]), vec![0.0, 1.0, 0.0]);
        assert_eq!(inner_max(&[0.2, 0.3, 0.5], 7.5, &[0.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn drains_worst_states_first() {
        let p = inner_max(&[0.1, 0.3, 0.6], 0.8, &[2.0, 1.0, 0.0]);
        // +0.4 on state 0, taken from state 2
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.3).abs() < 1e-15);
        assert!((p[2] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_state_gain_adds_reward_radius() {
        let cs = single_state(0.5, 0.2);
        let res = extended_value_iteration(&cs, EviOptions::new(1e-6)).unwrap();
        assert!((res.gain_estimate - 0.7).abs() < 1e-12);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.optimistic_reward, vec![0.7]);
    }

    #[test]
    fn clipping_caps_optimistic_reward() {
        let cs = single_state(0.9, 0.5);
        let mut opts = EviOptions::new(1e-6);
        assert!((extended_value_iteration(&cs, opts).unwrap().gain_estimate - 1.4).abs() < 1e-12);
        opts.clip_reward = true;
        assert!((extended_value_iteration(&cs, opts).unwrap().gain_estimate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wide_ball_makes_good_state_absorbing() {
        let cs = ConfidenceSet::new(
            2,
            1,
            vec![1.0, 0.0],
            vec![0.0, 0.0],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![2.0, 2.0],
        )
        .unwrap();
        let res = extended_value_iteration(&cs, EviOptions::new(1e-8)).unwrap();
        assert!((res.gain_estimate - 1.0).abs() < 1e-8);
        assert_eq!(res.optimistic_transitions[0], vec![1.0, 0.0]);
    }

    #[test]
    fn certificate_restates_stopping_rule() {
        let cs = single_state(0.25, 0.0);
        let res = extended_value_iteration(&cs, EviOptions::new(1e-9)).unwrap();
        let cert = gain_certificate(&res, &cs, false);
        assert_eq!(cert.recomputed_gain, 0.25);
        assert!(cert.holds(1e-9));
    }

    #[test]
    fn malformed_sets_are_rejected() {
        assert!(ConfidenceSet::new(1, 1, vec![0.5], vec![-1.0], vec![1.0], vec![0.0]).is_err());
        assert!(ConfidenceSet::new(2, 1, vec![0.5, 0.5], vec![0.0; 2], vec![0.5, 0.6, 1.0, 0.0], vec![0.0; 2]).is_err());
        assert!(matches!(
            extended_value_iteration(&single_state(0.1, 0.0), EviOptions::new(0.0)),
            Err(EviError::InvalidEpsilon(_))
        ));
    }

    #[test]
    fn cap_is_reported() {
        // a periodic swap with zero radii never contracts in span
        let cs = ConfidenceSet::new(2, 1, vec![1.0, 0.0], vec![0.0; 2], vec![0.0, 1.0, 1.0, 0.0], vec![0.0; 2]).unwrap();
        let opts = EviOptions { epsilon: 1e-3, iteration_cap: 50, clip_reward: false };
        assert!(matches!(extended_value_iteration(&cs, opts), Err(EviError::NoConvergence { iterations: 50, .. })));
    }
}
