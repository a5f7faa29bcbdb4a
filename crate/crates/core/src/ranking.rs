//! Per-metric ranks and the composite (average-rank) leaderboard.
//!
//! Each metric ranks algorithms independently, best = 1, ties sharing the
//! average of the ranks they span. The composite score is the mean of an
//! algorithm's four ranks; lower is better. Composite ties are broken by the
//! ECE rank, then the CRPS rank, then the algorithm name.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::CaseMetrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Dsc,
    Confidence,
    Ece,
    Crps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Smaller values rank first.
    Ascending,
    /// Larger values rank first.
    Descending,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Dsc, Metric::Confidence, Metric::Ece, Metric::Crps];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Dsc => "dsc",
            Metric::Confidence => "confidence",
            Metric::Ece => "ece",
            Metric::Crps => "crps",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn direction(self) -> Direction {
        match self {
            Metric::Dsc | Metric::Confidence => Direction::Descending,
            Metric::Ece | Metric::Crps => Direction::Ascending,
        }
    }

    /// Case-level value of this metric (organ mean).
    pub fn value(self, m: &CaseMetrics) -> Option<f64> {
        match self {
            Metric::Dsc => Some(m.dsc),
            Metric::Confidence => m.c_seg,
            Metric::Ece => Some(m.cece),
            Metric::Crps => Some(m.crps),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dsc" => Ok(Metric::Dsc),
            "confidence" => Ok(Metric::Confidence),
            "ece" => Ok(Metric::Ece),
            "crps" => Ok(Metric::Crps),
            other => Err(Error::parameter(format!("unknown metric '{other}'"))),
        }
    }
}

pub type Directions = [Direction; 4];

pub fn default_directions() -> Directions {
    Metric::ALL.map(Metric::direction)
}

/// Ranks finite values; best = 1, ties get the mean of the ranks they span.
pub fn rank_values(values: &[f64], direction: Direction) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let o = values[a].total_cmp(&values[b]);
        match direction {
            Direction::Ascending => o,
            Direction::Descending => o.reverse(),
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn rank_metric(values: &BTreeMap<String, f64>, direction: Direction) -> Result<BTreeMap<String, f64>> {
    if let Some((name, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::validation(format!("algorithm '{name}' has non-finite metric value {v}")));
    }
    let vals: Vec<f64> = values.values().copied().collect();
    let ranks = rank_values(&vals, direction);
    Ok(values.keys().cloned().zip(ranks).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub dsc: f64,
    pub confidence: f64,
    pub ece: f64,
    pub crps: f64,
}

impl MetricValues {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Dsc => self.dsc,
            Metric::Confidence => self.confidence,
            Metric::Ece => self.ece,
            Metric::Crps => self.crps,
        }
    }

    pub fn set(&mut self, metric: Metric, value: f64) {
        match metric {
            Metric::Dsc => self.dsc = value,
            Metric::Confidence => self.confidence = value,
            Metric::Ece => self.ece = value,
            Metric::Crps => self.crps = value,
        }
    }

    pub fn mean(&self) -> f64 {
        (self.dsc + self.confidence + self.ece + self.crps) / 4.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub algorithm: String,
    pub values: MetricValues,
    pub ranks: MetricValues,
    pub composite: f64,
    pub final_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    /// Rows ordered by final rank.
    pub rows: Vec<RankingRow>,
    pub directions: Directions,
}

impl RankingTable {
    pub fn row(&self, algorithm: &str) -> Option<&RankingRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm)
    }

    pub fn order(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.algorithm.as_str()).collect()
    }
}

/// Builds the leaderboard from per-metric values keyed by algorithm.
pub fn composite_ranking(
    values: &BTreeMap<Metric, BTreeMap<String, f64>>,
    directions: Directions,
) -> Result<RankingTable> {
    for metric in Metric::ALL {
        if !values.contains_key(&metric) {
            return Err(Error::validation(format!("metric '{metric}' missing from ranking input")));
        }
    }
    let algorithms: Vec<String> = values[&Metric::Dsc].keys().cloned().collect();
    if algorithms.is_empty() {
        return Err(Error::validation("ranking needs at least one algorithm"));
    }
    for metric in Metric::ALL {
        let keys: Vec<&String> = values[&metric].keys().collect();
        if keys.len() != algorithms.len() || keys.iter().zip(&algorithms).any(|(a, b)| *a != b) {
            let missing: Vec<&String> =
                algorithms.iter().filter(|a| !values[&metric].contains_key(*a)).collect();
            return Err(Error::validation(format!(
                "metric '{metric}' does not cover the same algorithms (missing: {missing:?})"
            )));
        }
    }
    let mut rows: Vec<RankingRow> = algorithms
        .iter()
        .map(|a| RankingRow {
            algorithm: a.clone(),
            values: MetricValues::default(),
            ranks: MetricValues::default(),
            composite: 0.0,
            final_rank: 0,
        })
        .collect();
    for metric in Metric::ALL {
        let ranks = rank_metric(&values[&metric], directions[metric.index()])?;
        for row in rows.iter_mut() {
            row.values.set(metric, values[&metric][&row.algorithm]);
            row.ranks.set(metric, ranks[&row.algorithm]);
        }
    }
    for row in rows.iter_mut() {
        row.composite = row.ranks.mean();
    }
    rows.sort_by(compare_rows);
    for (k, row) in rows.iter_mut().enumerate() {
        row.final_rank = k + 1;
    }
    Ok(RankingTable { rows, directions })
}

fn compare_rows(a: &RankingRow, b: &RankingRow) -> Ordering {
    a.composite
        .total_cmp(&b.composite)
        .then(a.ranks.ece.total_cmp(&b.ranks.ece))
        .then(a.ranks.crps.total_cmp(&b.ranks.crps))
        .then_with(|| a.algorithm.cmp(&b.algorithm))
}

/// Convenience wrapper over [`composite_ranking`] for row-shaped input.
pub fn rank_table(rows: &[(String, MetricValues)]) -> Result<RankingTable> {
    let mut values: BTreeMap<Metric, BTreeMap<String, f64>> = BTreeMap::new();
    for (name, v) in rows {
        for metric in Metric::ALL {
            if values.entry(metric).or_default().insert(name.clone(), v.get(metric)).is_some() {
                return Err(Error::validation(format!("algorithm '{name}' listed twice")));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::validation("ranking needs at least one algorithm"));
    }
    composite_ranking(&values, default_directions())
}

/// How per-case metrics become one value per algorithm and metric.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Mean metric over cases, then rank.
    #[default]
    MeanThenRank,
    /// Rank within each case, then average the ranks.
    RankThenMean,
}

/// Aggregates per-case metrics into per-metric, per-algorithm values and the directions to rank them by.
pub fn aggregate_for_ranking(
    case_metrics: &[CaseMetrics],
    aggregation: Aggregation,
) -> Result<(BTreeMap<Metric, BTreeMap<String, f64>>, Directions)> {
    if case_metrics.is_empty() {
        return Err(Error::validation("no case metrics to rank"));
    }
    let mut sums: BTreeMap<Metric, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    match aggregation {
        Aggregation::MeanThenRank => {
            for m in case_metrics {
                for metric in Metric::ALL {
                    let entry = sums.entry(metric).or_default().entry(m.algorithm.clone()).or_default();
                    if let Some(v) = metric.value(m) {
                        entry.0 += v;
                        entry.1 += 1;
                    }
                }
            }
        }
        Aggregation::RankThenMean => {
            let mut by_case: BTreeMap<&str, Vec<&CaseMetrics>> = BTreeMap::new();
            for m in case_metrics {
                by_case.entry(&m.case_id).or_default().push(m);
            }
            for metric in Metric::ALL {
                let table = sums.entry(metric).or_default();
                for group in by_case.values() {
                    let present: Vec<(&str, f64)> = group
                        .iter()
                        .filter_map(|m| metric.value(m).map(|v| (m.algorithm.as_str(), v)))
                        .collect();
                    let vals: Vec<f64> = present.iter().map(|p| p.1).collect();
                    let ranks = rank_values(&vals, metric.direction());
                    for ((name, _), r) in present.iter().zip(ranks) {
                        let e = table.entry(name.to_string()).or_default();
                        e.0 += r;
                        e.1 += 1;
                    }
                    for m in group {
                        table.entry(m.algorithm.clone()).or_default();
                    }
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for (metric, table) in sums {
        let mut values = BTreeMap::new();
        for (name, (sum, count)) in table {
            if count == 0 {
                return Err(Error::validation(format!(
                    "algorithm '{name}' has no defined '{metric}' value in any case"
                )));
            }
            values.insert(name, sum / count as f64);
        }
        out.insert(metric, values);
    }
    let directions = match aggregation {
        Aggregation::MeanThenRank => default_directions(),
        Aggregation::RankThenMean => [Direction::Ascending; 4],
    };
    Ok((out, directions))
}

/// Parses a CSV with header columns `algorithm, dsc, confidence, ece, crps` (any order, extra columns ignored).
pub fn read_metric_table_csv(reader: impl Read) -> Result<Vec<(String, MetricValues)>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers().map_err(|e| Error::format(format!("metric table header: {e}")))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::validation(format!("metric table is missing column '{name}'")))
    };
    let algo_col = find("algorithm")?;
    let cols = Metric::ALL.map(|m| find(m.name()));
    let cols: Vec<usize> = cols.into_iter().collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (line, record) in csv.records().enumerate() {
        let record = record.map_err(|e| Error::format(format!("metric table row {}: {e}", line + 2)))?;
        let name = record.get(algo_col).unwrap_or_default().to_string();
        if name.is_empty() {
            return Err(Error::validation(format!("metric table row {}: empty algorithm name", line + 2)));
        }
        let mut values = MetricValues::default();
        for (metric, &col) in Metric::ALL.iter().zip(&cols) {
            let raw = record.get(col).unwrap_or_default();
            let v: f64 = raw.parse().map_err(|_| {
                Error::validation(format!("metric table row {}: '{raw}' is not a number ({metric})", line + 2))
            })?;
            values.set(*metric, v);
        }
        rows.push((name, values));
    }
    Ok(rows)
}
