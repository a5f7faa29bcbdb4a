//! Run functions behind the `mreval` binary.

mod args;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use mreval_core::error::ResultExt;
use mreval_core::manifest::CaseEntry;
use mreval_core::metrics::{Binarization, CaseEvaluator, EceMode, EceOptions, EceScope, EceWeighting};
use mreval_core::phantom::PhantomDatasetSpec;
use mreval_core::ranking::{aggregate_for_ranking, read_metric_table_csv, rank_table, Aggregation};
use mreval_core::report::{emit, emit_ranking, Pooling, ReportArtifacts, RunMeta, SkippedCase, SCHEMA_VERSION};
use mreval_core::volume::{read_labels, read_probabilities, ReadOptions, SumPolicy};
use mreval_core::{
    aggregate, bootstrap_ranks, composite_ranking, correlations, load_manifest, BootstrapConfig, CaseMetrics,
    DatasetManifest, Error, ErrorKind, EvalConfig, Group, Organ, RankingTable, Result, SigmaConvention,
};

pub use args::run;

/// Everything that shapes an `evaluate` run. Echoed into `run_meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    /// Not echoed: the same run written to two places must produce identical files.
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub binarization: Binarization,
    pub ece_bins: usize,
    pub ece_weighting: EceWeighting,
    pub ece_mode: EceMode,
    pub ece_scope: EceScope,
    pub sigma: SigmaConvention,
    pub renormalize: bool,
    pub iterations: usize,
    pub seed: u64,
    /// Empty means every group.
    pub groups: Vec<Group>,
    pub classes: Vec<Organ>,
    pub aggregation: Aggregation,
    pub correlation_pooling: Pooling,
    pub skip_bad_cases: bool,
    pub parallel_cases: usize,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        let ece = EceOptions::default();
        Self {
            manifest: manifest.into(),
            out_dir: out_dir.into(),
            binarization: Binarization::default(),
            ece_bins: ece.bins,
            ece_weighting: ece.weighting,
            ece_mode: ece.mode,
            ece_scope: ece.scope,
            sigma: SigmaConvention::default(),
            renormalize: false,
            iterations: mreval_core::stability::DEFAULT_ITERATIONS,
            seed: mreval_core::stability::DEFAULT_SEED,
            groups: Vec::new(),
            classes: Organ::ALL.to_vec(),
            aggregation: Aggregation::default(),
            correlation_pooling: Pooling::default(),
            skip_bad_cases: false,
            parallel_cases: 1,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            binarization: self.binarization,
            ece: EceOptions { bins: self.ece_bins, weighting: self.ece_weighting, mode: self.ece_mode, scope: self.ece_scope },
            sigma: self.sigma,
            organs: self.classes.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.eval_config().validate()?;
        if self.iterations == 0 {
            return Err(Error::parameter("bootstrap iterations must be at least 1"));
        }
        if self.parallel_cases == 0 {
            return Err(Error::parameter("--parallel-cases must be at least 1"));
        }
        Ok(())
    }

    fn read_options(&self) -> ReadOptions {
        ReadOptions { sum_policy: if self.renormalize { SumPolicy::Renormalize } else { SumPolicy::Strict } }
    }
}

/// Process exit status for an error: 1 validation, 2 I/O or file format, 3 metric computation.
pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Validation | ErrorKind::Parameter => 1,
        ErrorKind::Io | ErrorKind::Format | ErrorKind::UnsupportedDtype => 2,
        ErrorKind::Shape | ErrorKind::Arity => 3,
    }
}

fn evaluate_entry(entry: &CaseEntry, config: &RunConfig, eval: &EvalConfig) -> Result<Vec<CaseMetrics>> {
    let raters = entry
        .rater_annotations
        .iter()
        .map(read_labels)
        .collect::<Result<Vec<_>>>()?;
    let evaluator = CaseEvaluator::new(&raters, eval)?;
    let mut out = Vec::with_capacity(entry.algorithm_predictions.len());
    for (algorithm, path) in &entry.algorithm_predictions {
        let pred = read_probabilities(path, config.read_options())?;
        out.push(evaluator.evaluate(&entry.case_id, algorithm, &pred)?);
    }
    Ok(out)
}

fn selected_cases<'a>(manifest: &'a DatasetManifest, config: &RunConfig) -> Vec<&'a CaseEntry> {
    manifest
        .cases
        .iter()
        .filter(|c| config.groups.is_empty() || config.groups.contains(&c.group))
        .collect()
}

/// Per-case metrics for every selected (case, algorithm) pair, sorted by case id then algorithm,
/// plus the cases skipped under `skip_bad_cases`.
pub fn evaluate_manifest(
    manifest: &DatasetManifest,
    config: &RunConfig,
) -> Result<(Vec<CaseMetrics>, Vec<SkippedCase>)> {
    config.validate()?;
    let eval = config.eval_config();
    let cases = selected_cases(manifest, config);
    if cases.is_empty() {
        return Err(Error::validation("no cases left after the group filter"));
    }
    let run = |entry: &&CaseEntry| {
        evaluate_entry(entry, config, &eval).with_context(|| format!("case '{}'", entry.case_id))
    };
    let results: Vec<Result<Vec<CaseMetrics>>> = if config.parallel_cases > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallel_cases)
            .build()
            .map_err(|e| Error::parameter(format!("worker pool: {e}")))?;
        pool.install(|| cases.par_iter().map(run).collect())
    } else {
        cases.iter().map(run).collect()
    };
    let mut metrics = Vec::new();
    let mut skipped = Vec::new();
    for (entry, result) in cases.iter().zip(results) {
        match result {
            Ok(m) => metrics.extend(m),
            Err(e) if config.skip_bad_cases => {
                skipped.push(SkippedCase { case_id: entry.case_id.clone(), reason: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    }
    if metrics.is_empty() {
        return Err(Error::validation("every case was skipped; nothing to report"));
    }
    metrics.sort_by(|a, b| (&a.case_id, &a.algorithm).cmp(&(&b.case_id, &b.algorithm)));
    Ok((metrics, skipped))
}

/// Evaluates, ranks, bootstraps and writes the artifact set into `config.out_dir`.
pub fn run_evaluate(config: &RunConfig) -> Result<ReportArtifacts> {
    config.validate()?;
    let manifest = load_manifest(&config.manifest)?;
    let (case_metrics, skipped) = evaluate_manifest(&manifest, config)?;
    let (values, directions) = aggregate_for_ranking(&case_metrics, config.aggregation)?;
    let ranking = composite_ranking(&values, directions)?;
    let bootstrap = bootstrap_ranks(
        &case_metrics,
        &BootstrapConfig { iterations: config.iterations, seed: config.seed, parallel: config.parallel_cases > 1 },
    )?;
    let groups = aggregate(&case_metrics, &manifest)?;
    let correlations = correlations(&case_metrics, config.correlation_pooling).ok();
    let case_groups: BTreeMap<String, Group> =
        manifest.cases.iter().map(|c| (c.case_id.clone(), c.group)).collect();
    let cases_evaluated = case_metrics.iter().map(|m| &m.case_id).collect::<std::collections::BTreeSet<_>>().len();
    let meta = RunMeta {
        schema_version: SCHEMA_VERSION,
        tool_version: mreval_core::VERSION.to_string(),
        config: serde_json::to_value(config).expect("config serializes"),
        seed: config.seed,
        manifest_sha256: manifest.sha256.clone(),
        cases_evaluated,
        skipped_cases: skipped,
    };
    let artifacts =
        ReportArtifacts { case_metrics, case_groups, ranking, groups, bootstrap, correlations, meta };
    emit(&artifacts, &config.out_dir)?;
    Ok(artifacts)
}

/// Generates a phantom dataset from a JSON spec file.
pub fn run_phantom(spec_path: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let spec = PhantomDatasetSpec::from_json_file(spec_path)?;
    spec.write(out_dir.as_ref())?;
    load_manifest(out_dir.as_ref().join("manifest.json"))
}

/// Ranks pre-aggregated metrics from a CSV file; writes ranking artifacts when `out_dir` is given.
pub fn run_rank_table(csv_path: impl AsRef<Path>, out_dir: Option<&Path>) -> Result<RankingTable> {
    let path = csv_path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let rows = read_metric_table_csv(file).with_context(|| path.display().to_string())?;
    let table = rank_table(&rows)?;
    if let Some(out) = out_dir {
        emit_ranking(&table, out)?;
    }
    Ok(table)
}

/// Loads the manifest (checking every referenced file exists) and reads the header of each
/// NIfTI volume to confirm the grids of a case agree.
pub fn run_validate(manifest_path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let manifest = load_manifest(manifest_path)?;
    for case in &manifest.cases {
        let mut reference: Option<(PathBuf, mreval_core::GridGeometry)> = None;
        let files = case.rater_annotations.iter().chain(case.algorithm_predictions.values());
        for file in files {
            let name = file.to_string_lossy();
            if !(name.ends_with(".nii") || name.ends_with(".nii.gz")) {
                continue;
            }
            let geometry = mreval_core::volume::read_header(file)?.geometry()?;
            match &reference {
                None => reference = Some((file.clone(), geometry)),
                Some((first, g)) if !g.is_compatible(&geometry) => {
                    return Err(Error::shape(format!(
                        "case '{}': {} and {} have different grids",
                        case.case_id,
                        first.display(),
                        file.display()
                    )))
                }
                Some(_) => {}
            }
        }
    }
    Ok(manifest)
}

/// Fixed-width text rendering of a ranking table.
pub fn format_ranking(table: &RankingTable) -> String {
    let width = table.rows.iter().map(|r| r.algorithm.len()).max().unwrap_or(0).max(9);
    let mut s = format!(
        "{:<width$}  {:>16} {:>16} {:>16} {:>16}  {:>9}  {:>5}\n",
        "algorithm", "dsc", "confidence", "ece", "crps", "composite", "final"
    );
    for r in &table.rows {
        let cell = |v: f64, rank: f64| format!("{v:.6} ({rank})");
        let _ = writeln!(
            s,
            "{:<width$}  {:>16} {:>16} {:>16} {:>16}  {:>9}  {:>5}",
            r.algorithm,
            cell(r.values.dsc, r.ranks.dsc),
            cell(r.values.confidence, r.ranks.confidence),
            cell(r.values.ece, r.ranks.ece),
            cell(r.values.crps, r.ranks.crps),
            r.composite,
            r.final_rank
        );
    }
    s
}
