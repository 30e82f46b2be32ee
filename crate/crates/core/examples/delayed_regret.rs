//! Regret of the delay-aware learner on riverswim with a fixed reward delay,
//! averaged over seeds, with the fitted growth exponent.
//!
//! `cargo run --release --example delayed_regret -- [n] [offset] [log2 T] [seeds]`

use ducrl::config::{DHatSetting, ExperimentConfig};
use ducrl::harness::{sweep, Experiment};

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let n = args.first().copied().unwrap_or(6);
    let offset = args.get(1).copied().unwrap_or(10);
    let log_t = args.get(2).copied().unwrap_or(16);
    let seeds = args.get(3).copied().unwrap_or(4);

    let text = format!(
        "horizon = {}\nseeds = [{}]\n[mdp]\nsource = \"riverswim\"\nn = {n}\n\
         [channel]\nkind = \"fixed_delay\"\ndelay_offset = {offset}\n[learner]\n",
        1u64 << log_t,
        (1..=seeds).map(|s| s.to_string()).collect::<Vec<_>>().join(", "),
    );
    let mut cfg = ExperimentConfig::parse(&text, &[]).expect("valid config");
    cfg.learner.d_hat = DHatSetting::Keyword(ducrl::config::DHatKeyword::Certified);
    let exp = Experiment::from_config(&cfg).expect("experiment");
    println!("rho* = {:.4}, D = {:.2}, d = {}", exp.rho_star, exp.diameter, exp.d_declared);

    let result = sweep(&exp, &cfg.seeds, rayon::current_num_threads()).expect("sweep");
    println!("{:>8} {:>12} {:>10} {:>8}", "t", "mean regret", "stderr", "R/t");
    for p in result.summary.curve.iter().filter(|p| p.t >= 256) {
        println!(
            "{:>8} {:>12.1} {:>10.1} {:>8.4}",
            p.t,
            p.mean_regret,
            p.stderr.unwrap_or(f64::NAN),
            p.mean_regret / p.t as f64
        );
    }
    match result.summary.alpha_fit {
        Some(a) => println!("fitted exponent from t = {}: {a:.3}", cfg.fit_from),
        None => println!("not enough checkpoints for a fit"),
    }
    println!("probe violations: {}", result.summary.probe_violations);
}
