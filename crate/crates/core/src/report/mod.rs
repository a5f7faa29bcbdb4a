//! Group-wise aggregation, metric correlations and artifact serialization.

mod emit;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, Group};
use crate::metrics::CaseMetrics;
use crate::numeric::CompensatedSum;
use crate::ranking::{rank_values, Direction, Metric};

pub use emit::{emit, emit_ranking, ReportArtifacts, RunMeta, SkippedCase, SCHEMA_VERSION};

/// Row label of a [`GroupReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    #[serde(rename = "A")]
    A,
    #[serde(rename = "B")]
    B,
    #[serde(rename = "C")]
    C,
    Overall,
}

impl GroupKey {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKey::A => "A",
            GroupKey::B => "B",
            GroupKey::C => "C",
            GroupKey::Overall => "overall",
        }
    }
}

impl From<Group> for GroupKey {
    fn from(g: Group) -> Self {
        match g {
            Group::A => GroupKey::A,
            Group::B => GroupKey::B,
            Group::C => GroupKey::C,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagCounts {
    pub empty_consensus_fg: usize,
    pub sigma_zero: usize,
    pub confidence_skipped: usize,
}

impl FlagCounts {
    fn add_case(&mut self, m: &CaseMetrics) {
        for c in &m.classes {
            self.empty_consensus_fg += usize::from(c.empty_consensus_fg);
            self.sigma_zero += usize::from(c.sigma_zero);
            self.confidence_skipped += usize::from(c.confidence_skipped);
        }
    }
}

/// Mean metrics of one algorithm over the cases of one group. Values are raw (fractions, cm³).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: GroupKey,
    pub algorithm: String,
    pub cases: usize,
    pub dsc: f64,
    /// `None` when no case had a defined confidence.
    pub confidence: Option<f64>,
    pub confidence_cases: usize,
    pub ece: f64,
    pub crps: f64,
    pub flags: FlagCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    /// Ordered by group (A, B, C, overall) then algorithm; empty groups are omitted.
    pub rows: Vec<GroupRow>,
}

impl GroupReport {
    pub fn row(&self, group: GroupKey, algorithm: &str) -> Option<&GroupRow> {
        self.rows.iter().find(|r| r.group == group && r.algorithm == algorithm)
    }
}

#[derive(Default)]
struct Accumulator {
    cases: usize,
    dsc: CompensatedSum,
    confidence: CompensatedSum,
    confidence_cases: usize,
    ece: CompensatedSum,
    crps: CompensatedSum,
    flags: FlagCounts,
}

impl Accumulator {
    fn add(&mut self, m: &CaseMetrics) {
        self.cases += 1;
        self.dsc.add(m.dsc);
        if let Some(c) = m.c_seg {
            self.confidence.add(c);
            self.confidence_cases += 1;
        }
        self.ece.add(m.cece);
        self.crps.add(m.crps);
        self.flags.add_case(m);
    }

    fn finish(&self, group: GroupKey, algorithm: &str) -> GroupRow {
        let n = self.cases as f64;
        GroupRow {
            group,
            algorithm: algorithm.to_string(),
            cases: self.cases,
            dsc: self.dsc.value() / n,
            confidence: (self.confidence_cases > 0)
                .then(|| self.confidence.value() / self.confidence_cases as f64),
            confidence_cases: self.confidence_cases,
            ece: self.ece.value() / n,
            crps: self.crps.value() / n,
            flags: self.flags,
        }
    }
}

/// Per-group and overall means. Group membership comes from the manifest.
pub fn aggregate(case_metrics: &[CaseMetrics], manifest: &DatasetManifest) -> Result<GroupReport> {
    let groups: BTreeMap<&str, Group> = manifest.cases.iter().map(|c| (c.case_id.as_str(), c.group)).collect();
    aggregate_by(case_metrics, |id| groups.get(id).copied())
}

/// [`aggregate`] with an arbitrary case-to-group lookup.
pub fn aggregate_by(case_metrics: &[CaseMetrics], group_of: impl Fn(&str) -> Option<Group>) -> Result<GroupReport> {
    let mut acc: BTreeMap<(GroupKey, &str), Accumulator> = BTreeMap::new();
    for m in case_metrics {
        let group = group_of(&m.case_id)
            .ok_or_else(|| Error::validation(format!("case '{}' is not listed in the manifest", m.case_id)))?;
        acc.entry((group.into(), m.algorithm.as_str())).or_default().add(m);
        acc.entry((GroupKey::Overall, m.algorithm.as_str())).or_default().add(m);
    }
    let rows = acc.iter().map(|(&(g, a), v)| v.finish(g, a)).collect();
    Ok(GroupReport { rows })
}

/// What each correlation sample point is.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// One point per (case, algorithm), using the organ-averaged metrics.
    #[default]
    PerCase,
    /// One point per (case, algorithm, organ). ECE falls back to the case value
    /// unless per-class calibration was computed.
    PerOrgan,
}

/// Symmetric coefficient matrices over the metric order of [`Metric::ALL`].
/// `None` marks an undefined entry (a metric with zero variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub pooling: Pooling,
    pub metrics: Vec<Metric>,
    pub samples: usize,
    pub pearson: [[Option<f64>; 4]; 4],
    pub spearman: [[Option<f64>; 4]; 4],
}

fn sample_points(case_metrics: &[CaseMetrics], pooling: Pooling) -> Vec<[f64; 4]> {
    match pooling {
        Pooling::PerCase => case_metrics
            .iter()
            .filter_map(|m| m.c_seg.map(|c| [m.dsc, c, m.cece, m.crps]))
            .collect(),
        Pooling::PerOrgan => case_metrics
            .iter()
            .flat_map(|m| {
                m.classes
                    .iter()
                    .filter_map(move |c| c.c_seg.map(|cs| [c.dsc, cs, c.cece.unwrap_or(m.cece), c.crps]))
            })
            .collect(),
    }
}

/// Pearson coefficient, `None` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if x.is_empty() || constant(x) || constant(y) {
        return None;
    }
    let n = x.len() as f64;
    let mx = crate::numeric::compensated_sum(x.iter().copied()) / n;
    let my = crate::numeric::compensated_sum(y.iter().copied()) / n;
    let (mut sxy, mut sxx, mut syy) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    let denom = (sxx.value() * syy.value()).sqrt();
    (denom > 0.0).then(|| (sxy.value() / denom).clamp(-1.0, 1.0))
}

/// Spearman coefficient: Pearson over tie-averaged ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&rank_values(x, Direction::Ascending), &rank_values(y, Direction::Ascending))
}

pub fn correlations(case_metrics: &[CaseMetrics], pooling: Pooling) -> Result<CorrelationMatrix> {
    let points = sample_points(case_metrics, pooling);
    if points.len() < 3 {
        return Err(Error::validation(format!(
            "correlations need at least 3 samples, got {}",
            points.len()
        )));
    }
    let columns: Vec<Vec<f64>> = (0..4).map(|k| points.iter().map(|p| p[k]).collect()).collect();
    let matrix = |f: fn(&[f64], &[f64]) -> Option<f64>| {
        let mut out = [[None; 4]; 4];
        for i in 0..4 {
            for j in i..4 {
                let v = if i == j {
                    f(&columns[i], &columns[j]).map(|_| 1.0)
                } else {
                    f(&columns[i], &columns[j])
                };
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        out
    };
    Ok(CorrelationMatrix {
        pooling,
        metrics: Metric::ALL.to_vec(),
        samples: points.len(),
        pearson: matrix(pearson),
        spearman: matrix(spearman),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(case: &str, algo: &str, v: [f64; 4]) -> CaseMetrics {
        CaseMetrics {
            case_id: case.into(),
            algorithm: algo.into(),
            classes: vec![],
            dsc: v[0],
            c_seg: Some(v[1]),
            cece: v[2],
            crps: v[3],
            cece_per_rater: vec![],
        }
    }

    fn groups(id: &str) -> Option<Group> {
        match id {
            "a1" | "a2" => Some(Group::A),
            "b1" | "b2" | "b3" => Some(Group::B),
            _ => None,
        }
    }

    #[test]
    fn overall_is_case_weighted() {
        let data = vec![
            record("a1", "x", [0.5, 1.0, 0.0, 1.0]),
            record("a2", "x", [1.0, 1.0, 0.0, 1.0]),
            record("b1", "x", [0.25, 0.5, 0.0, 4.0]),
            record("b2", "x", [0.25, 0.5, 0.0, 4.0]),
            record("b3", "x", [0.25, 0.5, 0.0, 4.0]),
        ];
        let r = aggregate_by(&data, groups).unwrap();
        assert_eq!(r.row(GroupKey::A, "x").unwrap().dsc, 0.75);
        assert_eq!(r.row(GroupKey::B, "x").unwrap().dsc, 0.25);
        // mean of group means would be 0.5
        assert_eq!(r.row(GroupKey::Overall, "x").unwrap().dsc, 0.45);
        assert_eq!(r.row(GroupKey::Overall, "x").unwrap().crps, 2.8);
        assert_eq!(r.row(GroupKey::Overall, "x").unwrap().cases, 5);
        assert!(r.row(GroupKey::C, "x").is_none());
    }

    #[test]
    fn single_group_overall_equals_group() {
        let data = vec![record("b1", "x", [0.3, 0.7, 0.01, 2.0]), record("b2", "x", [0.6, 0.9, 0.02, 3.0])];
        let r = aggregate_by(&data, groups).unwrap();
        let (b, o) = (r.row(GroupKey::B, "x").unwrap(), r.row(GroupKey::Overall, "x").unwrap());
        assert_eq!((b.dsc, b.confidence, b.ece, b.crps), (o.dsc, o.confidence, o.ece, o.crps));
    }

    #[test]
    fn unknown_case_rejected() {
        let err = aggregate_by(&[record("zz", "x", [0.0; 4])], groups).unwrap_err();
        assert!(err.to_string().contains("zz"));
    }

    #[test]
    fn skipped_confidence_is_left_out() {
        let mut data = vec![record("a1", "x", [0.5, 0.8, 0.0, 1.0]), record("a2", "x", [0.5, 0.0, 0.0, 1.0])];
        data[1].c_seg = None;
        let r = aggregate_by(&data, groups).unwrap();
        let row = r.row(GroupKey::A, "x").unwrap();
        assert_eq!(row.confidence, Some(0.8));
        assert_eq!(row.confidence_cases, 1);
    }

    #[test]
    fn duplicate_and_negated_metrics() {
        let data: Vec<CaseMetrics> = (0..6)
            .map(|k| {
                let x = k as f64 * 0.1 + (k * k) as f64 * 0.01;
                record(&format!("c{k}"), "x", [x, x, -x, (k as f64).sin()])
            })
            .collect();
        let c = correlations(&data, Pooling::PerCase).unwrap();
        assert!((c.pearson[0][1].unwrap() - 1.0).abs() < 1e-12);
        assert!((c.pearson[0][2].unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(c.spearman[0][2], Some(-1.0));
        for i in 0..4 {
            assert_eq!(c.pearson[i][i], Some(1.0));
            for j in 0..4 {
                assert_eq!(c.pearson[i][j], c.pearson[j][i]);
            }
        }
    }

    #[test]
    fn constant_metric_is_undefined() {
        let data: Vec<CaseMetrics> =
            (0..4).map(|k| record(&format!("c{k}"), "x", [k as f64, 0.5, k as f64 * 2.0, 1.0])).collect();
        let c = correlations(&data, Pooling::PerCase).unwrap();
        assert!(c.pearson[1].iter().all(Option::is_none));
        assert!(c.spearman[3].iter().all(Option::is_none));
        assert_eq!(c.pearson[0][2], Some(1.0));
        assert!(correlations(&data[..2], Pooling::PerCase).is_err());
    }
}
