//! The learner with an under-, exactly and over-estimated spillover bound on
//! the same delayed model: final regret and estimate-gap probe violations.
//!
//! `cargo run --release --example misspecified_delay -- [log2 T]`

use ducrl::config::{DHatSetting, ExperimentConfig};
use ducrl::harness::{sweep, Experiment};

fn main() {
    let log_t: u32 = std::env::args().nth(1).map_or(16, |a| a.parse().expect("integer argument"));
    let text = format!(
        "horizon = {}\nseeds = [1, 2, 3, 4]\n[mdp]\nsource = \"random_dense\"\nstates = 4\nactions = 2\n\
         alpha = 1.0\nseed = 3\n[channel]\nkind = \"fixed_delay\"\ndelay_offset = 6\n[learner]\n\
         [probes]\nexpect_violation = true\n",
        1u64 << log_t
    );
    let base = ExperimentConfig::parse(&text, &[]).expect("valid config");
    let d = Experiment::from_config(&base).unwrap().d_declared;
    println!("certified d = {d}");
    println!("{:>6} {:>18} {:>12} {:>10} {:>10}", "d_hat", "label", "mean regret", "alpha", "gap viol.");
    for d_hat in [0.0, 0.5 * d, d, 2.0 * d, 4.0 * d] {
        let mut cfg = base.clone();
        cfg.learner.d_hat = DHatSetting::Value(d_hat);
        let exp = Experiment::from_config(&cfg).unwrap();
        let result = sweep(&exp, &cfg.seeds, 4).unwrap();
        println!(
            "{d_hat:>6.1} {:>18} {:>12.1} {:>10.3} {:>10}",
            format!("{:?}", exp.misspecification()),
            result.summary.mean_regret_at_t,
            result.summary.alpha_fit.unwrap_or(f64::NAN),
            result.probes.ineq17.violations
        );
    }
}
