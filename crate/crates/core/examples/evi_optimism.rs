//! Extended value iteration on a confidence set around a known model: the
//! optimistic gain shrinks towards the true optimum as the radii shrink.
//!
//! `cargo run --release --example evi_optimism`

use ducrl::evi::{extended_value_iteration, ConfidenceSet, EviOptions};
use ducrl::mdp::{optimal_gain, riverswim};

fn main() {
    let mdp = riverswim(6);
    let (truth, _) = optimal_gain(&mdp, 1e-10).unwrap();
    println!("true optimal gain {:.5}", truth.gain);
    let exact = ConfidenceSet::exact(&mdp);
    println!("{:>8} {:>12} {:>8}  policy", "radius", "optimistic", "iters");
    for radius in [0.5, 0.2, 0.1, 0.05, 0.01, 0.0] {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let cs = ConfidenceSet::new(
            ns,
            na,
            (0..ns).flat_map(|s| (0..na).map(move |a| (s, a))).map(|(s, a)| mdp.reward(s, a)).collect(),
            vec![0.1 * radius; ns * na],
            (0..ns).flat_map(|s| (0..na).map(move |a| (s, a))).flat_map(|(s, a)| mdp.transition(s, a).to_vec()).collect(),
            vec![radius; ns * na],
        )
        .unwrap();
        let result = extended_value_iteration(&cs, EviOptions::new(1e-6)).unwrap();
        println!("{radius:>8} {:>12.5} {:>8}  {:?}", result.gain_estimate, result.iterations, result.policy.actions());
    }
    let at_zero = extended_value_iteration(&exact, EviOptions::new(1e-6)).unwrap();
    println!("exact set gives {:.5}", at_zero.gain_estimate);
}
