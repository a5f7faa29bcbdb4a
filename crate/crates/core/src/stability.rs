//! Bootstrap ranking stability.
//!
//! Each iteration draws `N` cases with replacement (`N` = number of cases),
//! averages every algorithm's metrics over the draw, and ranks the
//! algorithms per metric with the same tie-averaging as the leaderboard.
//! Iteration `i` uses random stream `i` of the run seed, so serial and
//! parallel runs produce identical summaries.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::CaseMetrics;
use crate::numeric::median;
use crate::ranking::{rank_values, Metric};
use crate::rng::StreamRng;

pub const DEFAULT_ITERATIONS: usize = 500;
pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { iterations: DEFAULT_ITERATIONS, seed: DEFAULT_SEED, parallel: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankFrequency {
    pub rank: f64,
    /// Fraction of iterations in `[0, 1]`.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankStats {
    pub metric: Metric,
    pub algorithm: String,
    pub mean_rank: f64,
    /// Population standard deviation over iterations.
    pub std_rank: f64,
    pub median_rank: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub rank_frequency: Vec<RankFrequency>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub iterations: usize,
    pub seed: u64,
    pub case_count: usize,
    pub algorithms: Vec<String>,
    /// Metric-major, algorithms in name order.
    pub stats: Vec<RankStats>,
    /// Per-iteration ranks, `[iteration][metric][algorithm]` flattened.
    #[serde(skip)]
    log: Vec<f64>,
}

impl BootstrapSummary {
    pub fn stats_for(&self, metric: Metric, algorithm: &str) -> Option<&RankStats> {
        self.stats.iter().find(|s| s.metric == metric && s.algorithm == algorithm)
    }

    /// Ranks of all algorithms for one metric in one iteration.
    pub fn iteration_ranks(&self, iteration: usize, metric: Metric) -> &[f64] {
        let k = self.algorithms.len();
        let start = (iteration * Metric::ALL.len() + metric.index()) * k;
        &self.log[start..start + k]
    }
}

/// Case x algorithm x metric values, NaN where a metric is undefined.
struct MetricCube {
    algorithms: Vec<String>,
    values: Vec<f64>,
    cases: usize,
}

impl MetricCube {
    fn build(case_metrics: &[CaseMetrics]) -> Result<Self> {
        if case_metrics.is_empty() {
            return Err(Error::validation("bootstrap needs at least one case"));
        }
        let algorithms: Vec<String> = case_metrics
            .iter()
            .map(|m| m.algorithm.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut by_case: BTreeMap<&str, BTreeMap<&str, &CaseMetrics>> = BTreeMap::new();
        for m in case_metrics {
            if by_case.entry(&m.case_id).or_default().insert(&m.algorithm, m).is_some() {
                return Err(Error::validation(format!(
                    "duplicate metrics for case '{}', algorithm '{}'",
                    m.case_id, m.algorithm
                )));
            }
        }
        let k = algorithms.len();
        let mut values = Vec::with_capacity(by_case.len() * k * 4);
        for (case_id, algos) in &by_case {
            if algos.len() != k {
                let missing: Vec<&String> =
                    algorithms.iter().filter(|a| !algos.contains_key(a.as_str())).collect();
                return Err(Error::validation(format!(
                    "case '{case_id}' lacks metrics for algorithms {missing:?}"
                )));
            }
            for a in &algorithms {
                let m = algos[a.as_str()];
                for metric in Metric::ALL {
                    values.push(metric.value(m).unwrap_or(f64::NAN));
                }
            }
        }
        Ok(Self { algorithms, values, cases: by_case.len() })
    }

    #[inline]
    fn get(&self, case: usize, algo: usize, metric: usize) -> f64 {
        self.values[(case * self.algorithms.len() + algo) * 4 + metric]
    }

    /// Ranks for one resample, `[metric][algorithm]` flattened.
    fn resample_ranks(&self, sample: &[usize]) -> Result<Vec<f64>> {
        let k = self.algorithms.len();
        let mut out = Vec::with_capacity(4 * k);
        for metric in Metric::ALL {
            let means = (0..k)
                .map(|a| {
                    let (mut sum, mut n) = (0.0, 0usize);
                    for &c in sample {
                        let v = self.get(c, a, metric.index());
                        if !v.is_nan() {
                            sum += v;
                            n += 1;
                        }
                    }
                    if n == 0 {
                        Err(Error::validation(format!(
                            "algorithm '{}' has no defined '{metric}' value in a bootstrap sample",
                            self.algorithms[a]
                        )))
                    } else {
                        Ok(sum / n as f64)
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            out.extend(rank_values(&means, metric.direction()));
        }
        Ok(out)
    }
}

/// Case indices drawn for one iteration.
pub fn resample_indices(seed: u64, iteration: usize, cases: usize) -> Vec<usize> {
    let mut rng = StreamRng::new(seed, iteration as u64);
    (0..cases).map(|_| rng.below(cases as u64) as usize).collect()
}

pub fn bootstrap_ranks(case_metrics: &[CaseMetrics], config: &BootstrapConfig) -> Result<BootstrapSummary> {
    if config.iterations < 1 {
        return Err(Error::parameter("bootstrap needs at least one iteration"));
    }
    let cube = MetricCube::build(case_metrics)?;
    let run = |i: usize| cube.resample_ranks(&resample_indices(config.seed, i, cube.cases));
    let per_iteration: Vec<Vec<f64>> = if config.parallel {
        (0..config.iterations).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..config.iterations).map(run).collect::<Result<_>>()?
    };
    let k = cube.algorithms.len();
    let log: Vec<f64> = per_iteration.into_iter().flatten().collect();

    let iterations = config.iterations as f64;
    let mut stats = Vec::with_capacity(4 * k);
    for metric in Metric::ALL {
        for (a, algorithm) in cube.algorithms.iter().enumerate() {
            let samples: Vec<f64> = (0..config.iterations)
                .map(|i| log[(i * 4 + metric.index()) * k + a])
                .collect();
            let mean_rank = samples.iter().sum::<f64>() / iterations;
            let var = samples.iter().map(|r| (r - mean_rank).powi(2)).sum::<f64>() / iterations;
            let std_rank = var.sqrt();
            let mut tally: BTreeMap<u64, usize> = BTreeMap::new();
            for r in &samples {
                // ranks are multiples of 1/2
                *tally.entry((r * 2.0).round() as u64).or_default() += 1;
            }
            let rank_frequency = tally
                .into_iter()
                .map(|(twice, count)| RankFrequency { rank: twice as f64 / 2.0, fraction: count as f64 / iterations })
                .collect();
            stats.push(RankStats {
                metric,
                algorithm: algorithm.clone(),
                mean_rank,
                std_rank,
                median_rank: median(&samples).expect("at least one iteration"),
                ci_low: mean_rank - 1.96 * std_rank,
                ci_high: mean_rank + 1.96 * std_rank,
                rank_frequency,
            });
        }
    }
    Ok(BootstrapSummary {
        iterations: config.iterations,
        seed: config.seed,
        case_count: cube.cases,
        algorithms: cube.algorithms,
        stats,
        log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BubbleRecord {
    pub metric: Metric,
    pub algorithm: String,
    pub rank: f64,
    /// Percentage of iterations.
    pub frequency: f64,
    pub median_rank: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Plot-ready rank distribution rows. Within a metric, algorithms are ordered
/// by median rank (then mean rank, then name), and each algorithm lists its
/// occupied ranks in ascending order.
pub fn bubble_export(summary: &BootstrapSummary) -> Vec<BubbleRecord> {
    let mut out = Vec::new();
    for metric in Metric::ALL {
        let mut stats: Vec<&RankStats> = summary.stats.iter().filter(|s| s.metric == metric).collect();
        stats.sort_by(|a, b| {
            a.median_rank
                .total_cmp(&b.median_rank)
                .then(a.mean_rank.total_cmp(&b.mean_rank))
                .then_with(|| a.algorithm.cmp(&b.algorithm))
        });
        for s in stats {
            for f in &s.rank_frequency {
                out.push(BubbleRecord {
                    metric,
                    algorithm: s.algorithm.clone(),
                    rank: f.rank,
                    frequency: f.fraction * 100.0,
                    median_rank: s.median_rank,
                    ci_low: s.ci_low,
                    ci_high: s.ci_high,
                });
            }
        }
    }
    out
}
