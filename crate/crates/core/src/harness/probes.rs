//! Invariant probes and the regret bound.

use serde::{Deserialize, Serialize};

use crate::learner::EpochStatistics;
use crate::sim::GroundTruthLedger;

/// Slack added to every probe's right-hand side.
pub const PROBE_SLACK: f64 = 1e-9;

/// Tally for one probe: how often it ran, how often it failed, and the
/// smallest `bound - observed` seen (negative on violation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ProbeEntry {
    pub checks: u64,
    pub violations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ProbeEntry {
    /// Books one check of `value <= bound`.
    pub fn check(&mut self, value: f64, bound: f64) {
        let margin = bound - value;
        self.checks += 1;
        if !(margin >= 0.0) {
            self.violations += 1;
        }
        self.worst_margin = Some(match self.worst_margin {
            Some(m) => m.min(margin),
            None => margin,
        });
    }

    pub fn merge(&mut self, other: &ProbeEntry) {
        self.checks += other.checks;
        self.violations += other.violations;
        self.worst_margin = match (self.worst_margin, other.worst_margin) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        if self.note.is_none() {
            self.note.clone_from(&other.note);
        }
    }
}

/// One entry per probe. Disabled probes stay at zero checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ProbeReport {
    /// `|r_hat - generated mean| <= d_hat E / N` at every epoch start.
    pub ineq17: ProbeEntry,
    /// Buffered mass never exceeds the declared spillover.
    pub spillover: ProbeEntry,
    /// Number of epochs against `SA log2(8T/SA)`.
    pub epoch_count: ProbeEntry,
    /// `0 <= generated - observed <= d` after every step.
    pub prefix_domination: ProbeEntry,
    /// `|observed + buffered - generated|` within 1e-6 after every step.
    pub conservation: ProbeEntry,
}

impl ProbeReport {
    pub fn entries(&self) -> [(&'static str, &ProbeEntry); 5] {
        [
            ("ineq17", &self.ineq17),
            ("spillover", &self.spillover),
            ("epoch_count", &self.epoch_count),
            ("prefix_domination", &self.prefix_domination),
            ("conservation", &self.conservation),
        ]
    }

    pub fn total_violations(&self) -> u64 {
        self.entries().iter().map(|(_, e)| e.violations).sum()
    }

    pub fn merge(&mut self, other: &ProbeReport) {
        self.ineq17.merge(&other.ineq17);
        self.spillover.merge(&other.spillover);
        self.epoch_count.merge(&other.epoch_count);
        self.prefix_domination.merge(&other.prefix_domination);
        self.conservation.merge(&other.conservation);
    }
}

/// Compares the learner's reward estimates at an epoch start against the
/// uncontaminated per-pair means from the ledger. Pairs with `N = 0` are
/// skipped. A mismatch between the learner's visit count and the ledger's
/// emission count is itself booked as a violation.
pub fn probe_ineq17(stats: &EpochStatistics, ledger: &GroundTruthLedger, d: f64, entry: &mut ProbeEntry) {
    for s in 0..stats.num_states() {
        for a in 0..stats.num_actions() {
            let n = stats.n(s, a);
            if n == 0 {
                continue;
            }
            if ledger.pair_count(s, a) != n {
                entry.check(1.0, 0.0);
                continue;
            }
            let n = n as f64;
            let gap = (stats.reward_estimate(s, a) - ledger.pair_sum(s, a) / n).abs();
            entry.check(gap, d * stats.presence(s, a) as f64 / n + PROBE_SLACK);
        }
    }
}

/// `SA log2(8T/SA)`.
pub fn epoch_count_bound(num_states: usize, num_actions: usize, horizon: u64) -> f64 {
    let sa = (num_states * num_actions) as f64;
    sa * (8.0 * horizon as f64 / sa).log2()
}

/// Checks the number of epochs begun over a run of length `horizon`.
/// Horizons shorter than `SA` are skipped with a note.
pub fn probe_epoch_count(epochs: u64, num_states: usize, num_actions: usize, horizon: u64) -> ProbeEntry {
    let mut entry = ProbeEntry::default();
    if horizon < (num_states * num_actions) as u64 {
        entry.note = Some(format!("skipped: horizon {horizon} shorter than SA = {}", num_states * num_actions));
        return entry;
    }
    entry.check(epochs as f64, epoch_count_bound(num_states, num_actions, horizon));
    entry
}

/// High-probability regret bound
/// `34 D S sqrt(A T ln(T/delta)) + 2 d (SA)^3 log2(8T/SA)^2`.
pub fn theorem_bound(diameter: f64, num_states: usize, num_actions: usize, horizon: u64, d: f64, delta: f64) -> f64 {
    let (s, a, t) = (num_states as f64, num_actions as f64, horizon as f64);
    34.0 * diameter * s * (a * t * (t / delta).ln()).sqrt() + additive_term(s, a, t, d)
}

/// Expected-regret form `68 D S sqrt(A T ln T) + 2 d (SA)^3 log2(8T/SA)^2`.
pub fn expected_regret_bound(diameter: f64, num_states: usize, num_actions: usize, horizon: u64, d: f64) -> f64 {
    let (s, a, t) = (num_states as f64, num_actions as f64, horizon as f64);
    68.0 * diameter * s * (a * t * t.ln()).sqrt() + additive_term(s, a, t, d)
}

fn additive_term(s: f64, a: f64, t: f64, d: f64) -> f64 {
    let sa = s * a;
    2.0 * d * sa.powi(3) * (8.0 * t / sa).log2().powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_small_case() {
        // 34 * sqrt(16 ln 32) + 2 * 7^2
        let expected = 34.0 * (16.0 * 32f64.ln()).sqrt() + 98.0;
        let b = theorem_bound(1.0, 1, 1, 16, 1.0, 0.5);
        assert!((b - expected).abs() < 1e-9);
        assert!((b - 351.18).abs() < 0.01, "{b}");
    }

    #[test]
    fn doubling_d_doubles_only_the_additive_term() {
        let b1 = theorem_bound(3.0, 4, 2, 1 << 12, 2.0, 0.01);
        let b2 = theorem_bound(3.0, 4, 2, 1 << 12, 4.0, 0.01);
        let b0 = theorem_bound(3.0, 4, 2, 1 << 12, 0.0, 0.01);
        assert!(((b2 - b0) - 2.0 * (b1 - b0)).abs() < 1e-6 * b2);
    }

    #[test]
    fn expected_form_at_delta_one_over_t() {
        let t = 1u64 << 10;
        let b = expected_regret_bound(2.0, 3, 2, t, 1.0);
        let lead = 68.0 * 2.0 * 3.0 * (2.0 * t as f64 * (t as f64).ln()).sqrt();
        assert!((b - lead - additive_term(3.0, 2.0, t as f64, 1.0)).abs() < 1e-9);
    }

    #[test]
    fn epoch_probe_single_pair() {
        // S = A = 1, T = 2^k: log2(8T) = k + 3, observed m = k + 1 for doubling epochs
        let e = probe_epoch_count(11, 1, 1, 1 << 10);
        assert_eq!((e.checks, e.violations), (1, 0));
        assert!((e.worst_margin.unwrap() - 2.0).abs() < 1e-12);
        let skipped = probe_epoch_count(3, 4, 3, 5);
        assert_eq!(skipped.checks, 0);
        assert!(skipped.note.is_some());
    }

    #[test]
    fn entry_merging() {
        let mut a = ProbeEntry::default();
        a.check(1.0, 2.0);
        let mut b = ProbeEntry::default();
        b.check(3.0, 2.0);
        a.merge(&b);
        assert_eq!((a.checks, a.violations), (2, 1));
        assert_eq!(a.worst_margin, Some(-1.0));
        let mut nan = ProbeEntry::default();
        nan.check(f64::NAN, 1.0);
        assert_eq!(nan.violations, 1);
    }
}
