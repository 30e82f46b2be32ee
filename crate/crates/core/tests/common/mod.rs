//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ducrl::mdp::{StationaryPolicy, TabularMdp};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;

/// `max p.u` over distributions `p` with `||p - center||_1 <= radius`,
/// solved as a linear program with slack variables for the absolute values.
pub fn lp_inner_max_objective(center: &[f64], radius: f64, u: &[f64]) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let p: Vec<_> = u.iter().map(|&ui| lp.add_var(ui, (0.0, 1.0))).collect();
    let slack: Vec<_> = center.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    lp.add_constraint(p.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    for i in 0..center.len() {
        lp.add_constraint(&[(slack[i], 1.0), (p[i], -1.0)][..], ComparisonOp::Ge, -center[i]);
        lp.add_constraint(&[(slack[i], 1.0), (p[i], 1.0)][..], ComparisonOp::Ge, center[i]);
    }
    lp.add_constraint(slack.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Le, radius);
    lp.solve().expect("feasible: the center itself").objective()
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik != 0.0 {
                for j in 0..n {
                    c[i][j] += aik * b[k][j];
                }
            }
        }
    }
    c
}

/// Per-state long-run average reward of `policy`, from the Cesaro limit of
/// the lazy chain `(P + I)/2` obtained by repeated squaring.
pub fn limiting_gain(mdp: &TabularMdp, policy: &StationaryPolicy) -> Vec<f64> {
    let n = mdp.num_states();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let row = mdp.transition(s, policy.action(s));
            (0..n).map(|j| 0.5 * row[j] + if j == s { 0.5 } else { 0.0 }).collect()
        })
        .collect();
    for _ in 0..50 {
        m = mat_mul(&m, &m);
        // keep rows stochastic; rounding would otherwise compound
        for row in &mut m {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }
    }
    (0..n).map(|s| (0..n).map(|j| m[s][j] * mdp.reward(j, policy.action(j))).sum()).collect()
}

/// Optimal gain of a communicating model by enumerating every deterministic
/// stationary policy.
pub fn enumerated_optimal_gain(mdp: &TabularMdp) -> f64 {
    StationaryPolicy::enumerate(mdp.num_states(), mdp.num_actions())
        .map(|pi| limiting_gain(mdp, &pi).into_iter().fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Uniformly random distribution over `n` points (normalized exponentials).
pub fn random_distribution<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}
