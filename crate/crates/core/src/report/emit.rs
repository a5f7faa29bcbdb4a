use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{CorrelationMatrix, GroupReport};
use crate::error::{Error, Result};
use crate::manifest::Group;
use crate::metrics::CaseMetrics;
use crate::ranking::RankingTable;
use crate::stability::{bubble_export, BootstrapSummary};

/// Version of the JSON layouts written by [`emit`].
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedCase {
    pub case_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub schema_version: u32,
    pub tool_version: String,
    /// Every option that influenced the run.
    pub config: serde_json::Value,
    pub seed: u64,
    pub manifest_sha256: String,
    pub cases_evaluated: usize,
    pub skipped_cases: Vec<SkippedCase>,
}

#[derive(Debug, Clone)]
pub struct ReportArtifacts {
    /// Sorted by case id then algorithm.
    pub case_metrics: Vec<CaseMetrics>,
    pub case_groups: BTreeMap<String, Group>,
    pub ranking: RankingTable,
    pub groups: GroupReport,
    pub bootstrap: BootstrapSummary,
    /// `None` when there were too few samples.
    pub correlations: Option<CorrelationMatrix>,
    pub meta: RunMeta,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

struct CsvTable {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s.into_bytes()
}

fn write(out: &Path, name: &str, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<()> {
    let path = out.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

fn ranking_csv(table: &RankingTable) -> CsvTable {
    let mut t = CsvTable::new(vec![
        "algorithm",
        "dsc",
        "dsc_rank",
        "confidence",
        "confidence_rank",
        "ece",
        "ece_rank",
        "crps",
        "crps_rank",
        "composite",
        "final_rank",
    ]);
    for r in &table.rows {
        t.push(vec![
            r.algorithm.clone(),
            num(r.values.dsc),
            num(r.ranks.dsc),
            num(r.values.confidence),
            num(r.ranks.confidence),
            num(r.values.ece),
            num(r.ranks.ece),
            num(r.values.crps),
            num(r.ranks.crps),
            num(r.composite),
            r.final_rank.to_string(),
        ]);
    }
    t
}

/// Writes `ranking.csv` and `ranking.json`.
pub fn emit_ranking(table: &RankingTable, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if table.rows.is_empty() {
        return Err(Error::validation("ranking table has no algorithms"));
    }
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    write(out, "ranking.csv", &ranking_csv(table).to_bytes(), &mut written)?;
    write(out, "ranking.json", &json_bytes(table), &mut written)?;
    Ok(written)
}

fn cases_csv(a: &ReportArtifacts) -> CsvTable {
    let mut t = CsvTable::new(vec![
        "case_id",
        "group",
        "algorithm",
        "dsc_pct",
        "confidence_pct",
        "ece_e3",
        "crps_cm3",
        "empty_consensus_fg",
        "sigma_zero",
        "confidence_skipped",
    ]);
    for m in &a.case_metrics {
        let flag = |f: fn(&crate::metrics::ClassMetrics) -> bool| m.classes.iter().filter(|c| f(c)).count().to_string();
        t.push(vec![
            m.case_id.clone(),
            a.case_groups.get(&m.case_id).map(|g| g.as_str().to_string()).unwrap_or_default(),
            m.algorithm.clone(),
            num(m.dsc * 100.0),
            opt(m.c_seg.map(|c| c * 100.0)),
            num(m.cece * 1e3),
            num(m.crps),
            flag(|c| c.empty_consensus_fg),
            flag(|c| c.sigma_zero),
            flag(|c| c.confidence_skipped),
        ]);
    }
    t
}

#[derive(Serialize)]
struct CaseRecord<'a> {
    group: Option<Group>,
    #[serde(flatten)]
    metrics: &'a CaseMetrics,
}

fn groups_csv(report: &GroupReport) -> CsvTable {
    let mut t = CsvTable::new(vec![
        "group",
        "algorithm",
        "cases",
        "dsc_pct",
        "confidence_pct",
        "confidence_cases",
        "ece_e3",
        "crps_cm3",
        "empty_consensus_fg",
        "sigma_zero",
        "confidence_skipped",
    ]);
    for r in &report.rows {
        t.push(vec![
            r.group.as_str().to_string(),
            r.algorithm.clone(),
            r.cases.to_string(),
            num(r.dsc * 100.0),
            opt(r.confidence.map(|c| c * 100.0)),
            r.confidence_cases.to_string(),
            num(r.ece * 1e3),
            num(r.crps),
            r.flags.empty_consensus_fg.to_string(),
            r.flags.sigma_zero.to_string(),
            r.flags.confidence_skipped.to_string(),
        ]);
    }
    t
}

fn bootstrap_csv(summary: &BootstrapSummary) -> CsvTable {
    let mut t = CsvTable::new(vec!["metric", "algorithm", "mean_rank", "std_rank", "median_rank", "ci_low", "ci_high"]);
    for s in &summary.stats {
        t.push(vec![
            s.metric.name().to_string(),
            s.algorithm.clone(),
            num(s.mean_rank),
            num(s.std_rank),
            num(s.median_rank),
            num(s.ci_low),
            num(s.ci_high),
        ]);
    }
    t
}

fn bubbles_csv(summary: &BootstrapSummary) -> CsvTable {
    let mut t =
        CsvTable::new(vec!["metric", "algorithm", "rank", "frequency_pct", "median_rank", "ci_low", "ci_high"]);
    for b in bubble_export(summary) {
        t.push(vec![
            b.metric.name().to_string(),
            b.algorithm,
            num(b.rank),
            num(b.frequency),
            num(b.median_rank),
            num(b.ci_low),
            num(b.ci_high),
        ]);
    }
    t
}

/// Writes the full artifact set into `out_dir` and returns the paths written.
/// Nothing is written when the inputs hold no algorithms.
pub fn emit(artifacts: &ReportArtifacts, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if artifacts.ranking.rows.is_empty() || artifacts.case_metrics.is_empty() {
        return Err(Error::validation("no algorithms to report"));
    }
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    let cases: Vec<CaseRecord> = artifacts
        .case_metrics
        .iter()
        .map(|m| CaseRecord { group: artifacts.case_groups.get(&m.case_id).copied(), metrics: m })
        .collect();
    write(out, "cases.csv", &cases_csv(artifacts).to_bytes(), &mut written)?;
    write(out, "cases.json", &json_bytes(&cases), &mut written)?;
    written.extend(emit_ranking(&artifacts.ranking, out)?);
    write(out, "groups.csv", &groups_csv(&artifacts.groups).to_bytes(), &mut written)?;
    write(out, "groups.json", &json_bytes(&artifacts.groups), &mut written)?;
    write(out, "bootstrap.csv", &bootstrap_csv(&artifacts.bootstrap).to_bytes(), &mut written)?;
    write(out, "bootstrap.json", &json_bytes(&artifacts.bootstrap), &mut written)?;
    write(out, "bubbles.csv", &bubbles_csv(&artifacts.bootstrap).to_bytes(), &mut written)?;
    write(out, "correlations.json", &json_bytes(&artifacts.correlations), &mut written)?;
    write(out, "run_meta.json", &json_bytes(&artifacts.meta), &mut written)?;
    Ok(written)
}
