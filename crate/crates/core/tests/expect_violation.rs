//! Negative tests: configurations that must trip the invariant probes.

use ducrl::config::{ChannelKind, DHatSetting, ExperimentConfig};
use ducrl::harness::{sweep, Experiment};
use ducrl::learner::Misspecification;

fn riverswim_delay10() -> ExperimentConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/riverswim_delay10.toml");
    ExperimentConfig::load(path.as_ref(), &["horizon=20000".to_string(), "seeds=[1, 2, 3]".to_string()]).unwrap()
}

#[test]
fn zero_d_hat_violates_the_estimate_gap() {
    let mut cfg = riverswim_delay10();
    cfg.learner.d_hat = DHatSetting::Value(0.0);
    let exp = Experiment::from_config(&cfg).unwrap();
    assert_eq!(exp.misspecification(), Misspecification::UnderEstimated);
    let result = sweep(&exp, &cfg.seeds, 3).unwrap();
    // every run completes; the probe records, it does not abort
    assert!(result.summary.failed_seeds.is_empty());
    assert!(result.probes.ineq17.violations >= 1, "{:?}", result.probes.ineq17);
    // the accounting probes do not depend on the learner's belief
    assert_eq!(result.probes.conservation.violations, 0);
    assert_eq!(result.probes.prefix_domination.violations, 0);
}

#[test]
fn certified_d_hat_keeps_the_same_runs_clean() {
    let cfg = riverswim_delay10();
    let exp = Experiment::from_config(&cfg).unwrap();
    assert_eq!(exp.misspecification(), Misspecification::Exact);
    assert_eq!(sweep(&exp, &cfg.seeds, 3).unwrap().probes.total_violations(), 0);
}

#[test]
fn unbounded_geometric_exceeds_its_nominal_spillover() {
    let text = "horizon = 2000\nseeds = [1]\n[mdp]\nsource = \"inline\"\nnum_states = 1\nnum_actions = 1\n\
                transition = [[1.0]]\nreward = [[0.9]]\n[channel]\nkind = \"unbounded_geometric\"\n\
                geometric_p = 0.1\ntotal_law = \"constant\"\nnegative_test = true\nnominal_d = 1.0\n\
                [learner]\n[probes]\nexpect_violation = true\n";
    let cfg = ExperimentConfig::parse(text, &[]).unwrap();
    assert_eq!(cfg.channel.kind, ChannelKind::UnboundedGeometric);
    let exp = Experiment::from_config(&cfg).unwrap();
    assert!(!exp.channel.is_certified());
    let seeds: Vec<u64> = (1..=100).collect();
    let result = sweep(&exp, &seeds, 4).unwrap();
    assert!(result.summary.failed_seeds.is_empty());
    assert!(result.probes.spillover.violations >= 1, "{:?}", result.probes.spillover);
    assert!(result.probes.prefix_domination.violations >= 1);
    // conservation holds whatever the channel does
    assert_eq!(result.probes.conservation.violations, 0);
}
