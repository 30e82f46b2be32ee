//! Exact solution of a model: optimal gain and policy, diameter, and the
//! matrix of minimal expected hitting times.
//!
//! `cargo run --release --example solve_mdp -- [riverswim n]`

use ducrl::mdp::{diameter, hitting_time_matrix, optimal_gain, policy_gain, riverswim, StationaryPolicy};

fn main() {
    let n = std::env::args().nth(1).map_or(6, |a| a.parse().expect("integer argument"));
    let mdp = riverswim(n);
    let (report, policy) = optimal_gain(&mdp, 1e-10).expect("riverswim is communicating");
    println!("riverswim({n}): rho* = {:.6} after {} iterations", report.gain, report.iterations);
    println!("optimal policy (0 = left, 1 = right): {:?}", policy.actions());

    // the myopic policy that always collects the small reward on the left bank
    let left = policy_gain(&mdp, &StationaryPolicy::constant(n, 0), 1e-10).unwrap();
    println!("always-left gain = {:.6}", left.gain);

    println!("diameter = {:.3}", diameter(&mdp, 1e-9).unwrap());
    println!("expected steps from row state to column state:");
    for row in hitting_time_matrix(&mdp, 1e-9).unwrap() {
        println!("  {}", row.iter().map(|h| format!("{h:7.2}")).collect::<Vec<_>>().join(" "));
    }
}
