//! Multi-seed sweeps and their aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{checkpoint_times, Experiment, HarnessError, ProbeReport, RunResult};

/// One seed's outcome; failures are kept rather than aborting the sweep.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub result: Result<RunResult, String>,
}

/// Mean regret (and standard error over seeds) at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub t: u64,
    pub mean_regret: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "D")]
    pub diameter: f64,
    pub rho_star: f64,
    pub d_certified: f64,
    pub d_hat: f64,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub mean_regret_at_t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_fit: Option<f64>,
    pub theorem_bound: f64,
    pub probe_violations: u64,
    pub curve: Vec<AggregatePoint>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Sorted by seed.
    pub outcomes: Vec<SeedOutcome>,
    pub summary: SweepSummary,
    pub probes: ProbeReport,
}

/// Least-squares slope of `ln y` against `ln x`. Needs two points with
/// distinct positive `x` and positive `y`; others are dropped.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn mean_and_stderr(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Runs every seed (in parallel, at most `jobs` at a time) and aggregates
/// in seed order.
pub fn sweep(exp: &Experiment, seeds: &[u64], jobs: usize) -> Result<SweepResult, HarnessError> {
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().expect("thread pool");
    let outcomes: Vec<SeedOutcome> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| SeedOutcome { seed, result: exp.run(seed).map_err(|e| e.to_string()) })
            .collect()
    });

    let mut probes = ProbeReport::default();
    let ok: Vec<&RunResult> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    for r in &ok {
        probes.merge(&r.probes);
    }
    let horizon = exp.config.horizon;
    let curve: Vec<AggregatePoint> = if ok.is_empty() {
        Vec::new()
    } else {
        checkpoint_times(horizon)
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                let regrets: Vec<f64> = ok.iter().map(|r| r.trace.checkpoints[i].regret).collect();
                let (mean_regret, stderr) = mean_and_stderr(&regrets);
                AggregatePoint { t, mean_regret, stderr }
            })
            .collect()
    };
    let fit_points: Vec<(f64, f64)> =
        curve.iter().filter(|p| p.t >= exp.config.fit_from).map(|p| (p.t as f64, p.mean_regret)).collect();
    let last = curve.last().copied();
    let summary = SweepSummary {
        num_states: exp.mdp.num_states(),
        num_actions: exp.mdp.num_actions(),
        diameter: exp.diameter,
        rho_star: exp.rho_star,
        d_certified: exp.d_declared,
        d_hat: exp.learner.d_hat,
        horizon,
        seeds: seeds.clone(),
        failed_seeds: outcomes.iter().filter(|o| o.result.is_err()).map(|o| o.seed).collect(),
        mean_regret_at_t: last.map_or(f64::NAN, |p| p.mean_regret),
        stderr: last.and_then(|p| p.stderr),
        alpha_fit: fit_slope(&fit_points),
        theorem_bound: exp.theorem_bound(horizon, exp.learner.delta),
        probe_violations: probes.total_violations(),
        curve,
    };
    Ok(SweepResult { outcomes, summary, probes })
}
