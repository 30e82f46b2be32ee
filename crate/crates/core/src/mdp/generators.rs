//! Named model generators.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{RawMdp, TabularMdp};

/// RiverSwim with `n >= 2` states. Action 0 swims left (always succeeds),
/// action 1 swims right against the current. Rewards are normalised to
/// `[0,1]`: `0.005` for resting at the left bank, `1` for pushing right at
/// the right bank.
pub fn riverswim(n: usize) -> TabularMdp {
    assert!(n >= 2, "riverswim needs at least two states");
    let mut transition = Vec::with_capacity(2 * n);
    let mut reward = vec![vec![0.0; 2]; n];
    for s in 0..n {
        let mut left = vec![0.0; n];
        left[s.saturating_sub(1)] = 1.0;
        let mut right = vec![0.0; n];
        if s == 0 {
            right[0] = 0.4;
            right[1] = 0.6;
        } else if s == n - 1 {
            right[s - 1] = 0.4;
            right[s] = 0.6;
        } else {
            right[s - 1] = 0.05;
            right[s] = 0.6;
            right[s + 1] = 0.35;
        }
        transition.push(left);
        transition.push(right);
    }
    reward[0][0] = 0.005;
    reward[n - 1][1] = 1.0;
    RawMdp { num_states: n, num_actions: 2, transition, reward }
        .validate()
        .expect("riverswim tables are valid")
}

/// Dense random model: each row `p(.|s,a)` drawn from a symmetric
/// Dirichlet(`alpha`) and each reward uniform on `[0,1]`.
pub fn random_dense<R: Rng + ?Sized>(num_states: usize, num_actions: usize, alpha: f64, rng: &mut R) -> TabularMdp {
    assert!(num_states >= 1 && num_actions >= 1);
    assert!(alpha > 0.0, "Dirichlet concentration must be positive");
    let gamma = Gamma::new(alpha, 1.0).expect("valid Gamma");
    let mut transition = Vec::with_capacity(num_states * num_actions);
    for _ in 0..num_states * num_actions {
        let row: Vec<f64> = if num_states == 1 {
            vec![1.0]
        } else {
            // Dirichlet(alpha) as normalised Gamma(alpha, 1) draws
            let mut row: Vec<f64> = (0..num_states).map(|_| gamma.sample(rng)).collect();
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                // every draw underflowed; only possible for tiny alpha
                row.iter_mut().for_each(|p| *p = 1.0);
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= total);
            // put any rounding slack on the largest entry so the row sums to 1
            let slack = 1.0 - row.iter().sum::<f64>();
            let top = (0..row.len()).max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap();
            row[top] += slack;
            row
        };
        transition.push(row);
    }
    let reward = (0..num_states).map(|_| (0..num_actions).map(|_| rng.random::<f64>()).collect()).collect();
    RawMdp { num_states, num_actions, transition, reward }
        .validate()
        .expect("generated tables are valid")
}

/// Two states, action 0 stays and action 1 switches, each succeeding with
/// probability 0.9. State 1 pays more than state 0.
pub fn two_state() -> TabularMdp {
    RawMdp {
        num_states: 2,
        num_actions: 2,
        transition: vec![vec![0.9, 0.1], vec![0.1, 0.9], vec![0.1, 0.9], vec![0.9, 0.1]],
        reward: vec![vec![0.2, 0.1], vec![0.8, 0.6]],
    }
    .validate()
    .expect("two_state tables are valid")
}
