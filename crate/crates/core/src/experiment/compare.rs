use serde::{Deserialize, Serialize};

use super::{ExperimentError, Scorecard};
use crate::rng;

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
pub const BOOTSTRAP_SEED: u64 = 0x5eed_b007;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Metric {
    FinalReturn,
    /// Runs that never reach the threshold count as `episodes + evalBlock`.
    EpisodesToThreshold,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "finalReturn" => Ok(Metric::FinalReturn),
            "episodesToThreshold" => Ok(Metric::EpisodesToThreshold),
            other => Err(format!("unknown metric {other:?} (expected finalReturn or episodesToThreshold)")),
        }
    }
}

/// `second − first` for one pair of scorecards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PairComparison {
    pub first: usize,
    pub second: usize,
    /// Seeds matched one to one; otherwise the two groups are resampled
    /// independently.
    pub paired: bool,
    pub mean_difference: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// The 95% interval excludes 0.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonReport {
    pub metric: Metric,
    pub task: super::Task,
    pub resamples: usize,
    pub pairs: Vec<PairComparison>,
}

fn metric_values(card: &Scorecard, metric: Metric) -> Vec<f64> {
    card.runs
        .iter()
        .map(|r| match metric {
            Metric::FinalReturn => r.final_return,
            Metric::EpisodesToThreshold => r.episodes_to_threshold.unwrap_or(card.episodes + card.eval_block) as f64,
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn resampled_mean(xs: &[f64], r: &mut rng::SimRng) -> f64 {
    (0..xs.len()).map(|_| xs[rng::below(r, xs.len())]).sum::<f64>() / xs.len() as f64
}

/// Percentile bootstrap of the mean difference for every pair `i < j`.
pub fn compare_agents(scorecards: &[Scorecard], metric: Metric) -> Result<ComparisonReport, ExperimentError> {
    if scorecards.len() < 2 {
        return Err(ExperimentError::Config(format!("need at least 2 scorecards, got {}", scorecards.len())));
    }
    let task = scorecards[0].task;
    if let Some(other) = scorecards.iter().find(|c| c.task != task) {
        return Err(ExperimentError::TaskMismatch(format!("{:?} vs {:?}", task, other.task)));
    }
    let values: Vec<Vec<f64>> = scorecards.iter().map(|c| metric_values(c, metric)).collect();
    if let Some(i) = values.iter().position(Vec::is_empty) {
        return Err(ExperimentError::Config(format!("scorecard {i} has no runs")));
    }

    let lo = BOOTSTRAP_RESAMPLES * 25 / 1000;
    let hi = BOOTSTRAP_RESAMPLES - lo - 1;
    let mut pairs = Vec::new();
    for i in 0..scorecards.len() {
        for j in i + 1..scorecards.len() {
            let seeds = |c: &Scorecard| c.runs.iter().map(|r| r.seed).collect::<Vec<_>>();
            let paired = seeds(&scorecards[i]) == seeds(&scorecards[j]);
            let (x, y) = (&values[i], &values[j]);
            let mut r = rng::seeded(rng::derive_seed(BOOTSTRAP_SEED, (i * scorecards.len() + j) as u64));
            let (mean_difference, mut stats): (f64, Vec<f64>) = if paired {
                let d: Vec<f64> = y.iter().zip(x).map(|(b, a)| b - a).collect();
                (mean(&d), (0..BOOTSTRAP_RESAMPLES).map(|_| resampled_mean(&d, &mut r)).collect())
            } else {
                let stats = (0..BOOTSTRAP_RESAMPLES)
                    .map(|_| {
                        let a = resampled_mean(x, &mut r);
                        resampled_mean(y, &mut r) - a
                    })
                    .collect();
                (mean(y) - mean(x), stats)
            };
            stats.sort_by(f64::total_cmp);
            let (ci_lower, ci_upper) = (stats[lo], stats[hi]);
            pairs.push(PairComparison {
                first: i,
                second: j,
                paired,
                mean_difference,
                ci_lower,
                ci_upper,
                significant: ci_lower > 0.0 || ci_upper < 0.0,
            });
        }
    }
    Ok(ComparisonReport { metric, task, resamples: BOOTSTRAP_RESAMPLES, pairs })
}
