//! Analytic spillover bound of each delay profile next to the largest joint
//! spillover seen in sampled reward sequences.
//!
//! `cargo run --release --example certify_channel -- [samples]`

use ducrl::channel::{joint_spillover, DelayProfile, RewardSequenceSpec, TotalLaw};
use ducrl::mdp::random_dense;
use ducrl::rng::{stream, StreamRole};

fn main() {
    let samples: usize = std::env::args().nth(1).map_or(10_000, |a| a.parse().expect("integer argument"));
    let mdp = random_dense(3, 2, 1.0, &mut stream(1, StreamRole::ModelGeneration));
    let profiles = [
        ("immediate", DelayProfile::Immediate),
        ("fixed delay 4", DelayProfile::fixed_delay(4)),
        ("uniform window 6", DelayProfile::UniformWindow { width: 6 }),
        ("dyadic 20", DelayProfile::Dyadic { width: 20 }),
        ("truncated geometric", DelayProfile::TruncatedGeometric { width: 10, ratio: 0.5 }),
    ];
    println!("{:<22} {:>10} {:>10}", "profile", "analytic", "sampled");
    for (name, profile) in profiles {
        let spec = RewardSequenceSpec::new(&mdp, profile, TotalLaw::Bernoulli).unwrap();
        let mut rng = stream(2, StreamRole::Certification);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let batch: Vec<_> = (0..mdp.num_states())
                .flat_map(|s| (0..mdp.num_actions()).map(move |a| (s, a)))
                .map(|(s, a)| spec.sample_sequence(s, a, &mut rng))
                .collect();
            worst = worst.max(joint_spillover(&batch));
        }
        println!("{name:<22} {:>10.3} {worst:>10.3}", spec.spillover_bound());
    }

    // unbounded support: only a nominal value can be declared
    let spec = RewardSequenceSpec::new(&mdp, DelayProfile::UnboundedGeometric { ratio: 0.5 }, TotalLaw::Bernoulli)
        .unwrap()
        .with_nominal_spillover(2.0)
        .unwrap();
    println!("unbounded geometric: certified = {}, nominal d = {}", spec.is_certified(), spec.declared_spillover());
}
