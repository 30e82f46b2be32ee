//! Exact oracles: policy gain, optimal gain, hitting times and diameter.

use super::{MdpError, StationaryPolicy, TabularMdp};

/// Sweep cap shared by every value-iteration loop in this module.
pub const DEFAULT_SWEEP_CAP: usize = 1_000_000;

/// Weight on the true kernel in the aperiodicity transform
/// `P' = w P + (1 - w) I`. The transform leaves every stationary
/// distribution, and therefore every gain, unchanged while removing
/// periodicity that would stop the span from contracting.
const KERNEL_WEIGHT: f64 = 0.5;

/// Outcome of a relative value iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// Midpoint of the last utility increment.
    pub gain: f64,
    /// Terminal utility, re-centred so its minimum is zero.
    pub bias_like_vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub span_residual: f64,
}

fn check_tol(tol: f64) {
    assert!(tol > 0.0 && tol.is_finite(), "tolerance must be positive, got {tol}");
}

/// Runs `u <- sweep(u)` until the span of the increment drops below `tol`.
fn relative_value_iteration(
    num_states: usize,
    tol: f64,
    cap: usize,
    mut sweep: impl FnMut(&[f64], &mut [f64]),
) -> Result<SolveReport, MdpError> {
    let mut u = vec![0.0; num_states];
    let mut next = vec![0.0; num_states];
    let mut residual = f64::INFINITY;
    for iteration in 1..=cap {
        sweep(&u, &mut next);
        let (lo, hi) = increment_bounds(&u, &next);
        residual = hi - lo;
        let floor = next.iter().copied().fold(f64::INFINITY, f64::min);
        for (dst, &v) in u.iter_mut().zip(&next) {
            *dst = v - floor;
        }
        if residual < tol {
            return Ok(SolveReport {
                gain: 0.5 * (hi + lo),
                bias_like_vector: u,
                iterations: iteration,
                converged: true,
                span_residual: residual,
            });
        }
    }
    Err(MdpError::NoConvergence { iterations: cap, residual })
}

pub(crate) fn increment_bounds(prev: &[f64], next: &[f64]) -> (f64, f64) {
    prev.iter().zip(next).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&a, &b)| {
        let d = b - a;
        (lo.min(d), hi.max(d))
    })
}

fn expectation(p: &[f64], u: &[f64]) -> f64 {
    p.iter().zip(u).map(|(p, u)| p * u).sum()
}

/// Long-run average reward of `policy`.
///
/// Converges for every policy whose chain has a single recurrent class; a
/// policy with several recurrent classes of different gains never reaches the
/// span tolerance and yields `NoConvergence`.
pub fn policy_gain(mdp: &TabularMdp, policy: &StationaryPolicy, tol: f64) -> Result<SolveReport, MdpError> {
    check_tol(tol);
    policy.check(mdp)?;
    relative_value_iteration(mdp.num_states(), tol, DEFAULT_SWEEP_CAP, |u, next| {
        for (s, slot) in next.iter_mut().enumerate() {
            let a = policy.action(s);
            *slot = mdp.reward(s, a)
                + KERNEL_WEIGHT * expectation(mdp.transition(s, a), u)
                + (1.0 - KERNEL_WEIGHT) * u[s];
        }
    })
}

/// Optimal gain `rho*` and a greedy optimal policy (ties to the lowest action).
///
/// Rejects models with infinite diameter.
pub fn optimal_gain(mdp: &TabularMdp, tol: f64) -> Result<(SolveReport, StationaryPolicy), MdpError> {
    check_tol(tol);
    diameter(mdp, 1e-6)?;
    let report = relative_value_iteration(mdp.num_states(), tol, DEFAULT_SWEEP_CAP, |u, next| {
        for (s, slot) in next.iter_mut().enumerate() {
            *slot = greedy_action(mdp, s, u).1;
        }
    })?;
    let policy = StationaryPolicy::new(
        (0..mdp.num_states()).map(|s| greedy_action(mdp, s, &report.bias_like_vector).0).collect(),
    );
    Ok((report, policy))
}

fn greedy_action(mdp: &TabularMdp, s: usize, u: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for a in 0..mdp.num_actions() {
        let q = mdp.reward(s, a)
            + KERNEL_WEIGHT * expectation(mdp.transition(s, a), u)
            + (1.0 - KERNEL_WEIGHT) * u[s];
        if q > best.1 {
            best = (a, q);
        }
    }
    best
}

/// States from which `target` is reachable with positive probability under some policy.
fn can_reach(mdp: &TabularMdp, target: usize) -> Vec<bool> {
    let n = mdp.num_states();
    let mut reach = vec![false; n];
    reach[target] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if reach[s] {
                continue;
            }
            let hits = (0..mdp.num_actions())
                .any(|a| mdp.transition(s, a).iter().zip(&reach).any(|(&p, &r)| p > 0.0 && r));
            if hits {
                reach[s] = true;
                changed = true;
            }
        }
    }
    reach
}

/// Minimal expected hitting times of `target`: the fixed point of
/// `h(s) = 1 + min_a sum_s' p(s'|s,a) h(s')` with `h(target) = 0`.
pub fn min_expected_hitting_time(mdp: &TabularMdp, target: usize, tol: f64) -> Result<Vec<f64>, MdpError> {
    check_tol(tol);
    let n = mdp.num_states();
    assert!(target < n, "target {target} out of range");
    if let Some(from) = can_reach(mdp, target).iter().position(|r| !r) {
        return Err(MdpError::Unreachable { from, target });
    }
    let divergence_cap = 1e4 * n as f64;
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..DEFAULT_SWEEP_CAP {
        let mut change: f64 = 0.0;
        for s in 0..n {
            next[s] = if s == target {
                0.0
            } else {
                let best = (0..mdp.num_actions())
                    .map(|a| expectation(mdp.transition(s, a), &h))
                    .fold(f64::INFINITY, f64::min);
                1.0 + best
            };
            change = change.max((next[s] - h[s]).abs());
        }
        std::mem::swap(&mut h, &mut next);
        if let Some(from) = h.iter().position(|&v| v > divergence_cap) {
            return Err(MdpError::Unreachable { from, target });
        }
        if change < tol {
            return Ok(h);
        }
    }
    Err(MdpError::NoConvergence { iterations: DEFAULT_SWEEP_CAP, residual: f64::NAN })
}

/// `hitting[target][s]` for every target.
pub fn hitting_time_matrix(mdp: &TabularMdp, tol: f64) -> Result<Vec<Vec<f64>>, MdpError> {
    (0..mdp.num_states())
        .map(|target| {
            min_expected_hitting_time(mdp, target, tol).map_err(|e| match e {
                MdpError::Unreachable { from, target } => MdpError::InfiniteDiameter { from, to: target },
                other => other,
            })
        })
        .collect()
}

/// `D(M)`: worst ordered pair of the best expected travel time. Zero for one state.
pub fn diameter(mdp: &TabularMdp, tol: f64) -> Result<f64, MdpError> {
    let matrix = hitting_time_matrix(mdp, tol)?;
    Ok(matrix
        .iter()
        .enumerate()
        .flat_map(|(target, h)| h.iter().enumerate().filter(move |(s, _)| *s != target).map(|(_, &v)| v))
        .fold(0.0, f64::max))
}
