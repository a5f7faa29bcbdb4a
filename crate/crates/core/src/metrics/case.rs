use serde::{Deserialize, Serialize};

use super::calibration::{cece_multirater, EceOptions, EceScope};
use super::confidence::class_confidence;
use super::dice::{dsc_consensus, Binarization};
use super::volume::{crps_gaussian, predicted_volume, rater_volume_distribution, VolumeDistribution};
use crate::consensus::{derive_regions, ConsensusRegions};
use crate::error::{Error, Result, ResultExt};
use crate::mask::VoxelMask;
use crate::numeric::{mean, SigmaConvention};
use crate::volume::{LabelVolume, Organ, ProbabilityVolume};

/// Knobs shared by every (case, algorithm) evaluation of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub binarization: Binarization,
    pub ece: EceOptions,
    pub sigma: SigmaConvention,
    pub organs: Vec<Organ>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            binarization: Binarization::default(),
            ece: EceOptions::default(),
            sigma: SigmaConvention::default(),
            organs: Organ::ALL.to_vec(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.binarization.validate()?;
        self.ece.validate()?;
        if self.organs.is_empty() {
            return Err(Error::parameter("at least one organ class must be evaluated"));
        }
        let mut sorted = self.organs.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.organs.len() {
            return Err(Error::parameter("organ classes listed more than once"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub organ: Organ,
    pub dsc: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub c_f: Option<f64>,
    pub c_b: Option<f64>,
    pub c_seg: Option<f64>,
    /// Only populated in per-class cECE mode.
    pub cece: Option<f64>,
    pub predicted_volume_cm3: f64,
    pub rater_mean_cm3: f64,
    pub rater_std_cm3: f64,
    pub crps: f64,
    pub empty_consensus_fg: bool,
    pub sigma_zero: bool,
    /// `c_seg` undefined because a consensus mask is empty; left out of the case mean.
    pub confidence_skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case_id: String,
    pub algorithm: String,
    pub classes: Vec<ClassMetrics>,
    /// Organ means.
    pub dsc: f64,
    pub c_seg: Option<f64>,
    pub cece: f64,
    pub crps: f64,
    pub cece_per_rater: Vec<f64>,
}

impl CaseMetrics {
    pub fn class(&self, organ: Organ) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.organ == organ)
    }
}

/// Rater-derived state of one case, reused across all algorithms.
#[derive(Debug, Clone)]
pub struct CaseEvaluator<'a> {
    raters: &'a [LabelVolume],
    regions: ConsensusRegions,
    distributions: Vec<(Organ, VolumeDistribution)>,
    include: Option<VoxelMask>,
    config: EvalConfig,
}

impl<'a> CaseEvaluator<'a> {
    pub fn new(raters: &'a [LabelVolume], config: &EvalConfig) -> Result<Self> {
        config.validate()?;
        let regions = derive_regions(raters)?;
        let distributions = config
            .organs
            .iter()
            .map(|&o| rater_volume_distribution(raters, o, config.sigma).map(|d| (o, d)))
            .collect::<Result<Vec<_>>>()?;
        let include = match config.ece.scope {
            EceScope::AllVoxels => None,
            EceScope::ExcludeDissensus => Some(regions.any_dissensus().complement()),
        };
        Ok(Self { raters, regions, distributions, include, config: config.clone() })
    }

    pub fn regions(&self) -> &ConsensusRegions {
        &self.regions
    }

    pub fn evaluate(&self, case_id: &str, algorithm: &str, pred: &ProbabilityVolume) -> Result<CaseMetrics> {
        self.evaluate_inner(case_id, algorithm, pred)
            .with_context(|| format!("case '{case_id}', algorithm '{algorithm}'"))
    }

    fn evaluate_inner(&self, case_id: &str, algorithm: &str, pred: &ProbabilityVolume) -> Result<CaseMetrics> {
        self.regions.geometry().ensure_compatible(pred.geometry(), "prediction vs raters")?;
        let calibration =
            cece_multirater(pred, self.raters, &self.config.ece, &self.config.organs, self.include.as_ref())?;
        let mut classes = Vec::with_capacity(self.config.organs.len());
        for &(organ, dist) in &self.distributions {
            let dice = dsc_consensus(pred, &self.regions, organ, self.config.binarization)?;
            let conf = class_confidence(pred, &self.regions, organ)?;
            let y = predicted_volume(pred, organ);
            let crps = crps_gaussian(dist.mean, dist.std, y)?;
            let cece = calibration
                .per_class
                .as_ref()
                .and_then(|pc| pc.iter().find(|(o, _)| *o == organ).map(|&(_, v)| v));
            classes.push(ClassMetrics {
                organ,
                dsc: dice.dice,
                true_positives: dice.true_positives,
                false_positives: dice.false_positives,
                false_negatives: dice.false_negatives,
                c_f: conf.c_f,
                c_b: conf.c_b,
                c_seg: conf.c_seg,
                cece,
                predicted_volume_cm3: y,
                rater_mean_cm3: dist.mean,
                rater_std_cm3: dist.std,
                crps,
                empty_consensus_fg: dice.empty_consensus,
                sigma_zero: dist.std == 0.0,
                confidence_skipped: conf.c_seg.is_none(),
            });
        }
        let dsc = mean(&classes.iter().map(|c| c.dsc).collect::<Vec<_>>()).unwrap_or(f64::NAN);
        let c_seg = mean(&classes.iter().filter_map(|c| c.c_seg).collect::<Vec<_>>());
        let crps = mean(&classes.iter().map(|c| c.crps).collect::<Vec<_>>()).unwrap_or(f64::NAN);
        Ok(CaseMetrics {
            case_id: case_id.to_string(),
            algorithm: algorithm.to_string(),
            classes,
            dsc,
            c_seg,
            cece: calibration.cece,
            crps,
            cece_per_rater: calibration.per_rater,
        })
    }
}

/// Evaluates one prediction against its raters.
pub fn evaluate_case(
    case_id: &str,
    algorithm: &str,
    pred: &ProbabilityVolume,
    raters: &[LabelVolume],
    config: &EvalConfig,
) -> Result<CaseMetrics> {
    CaseEvaluator::new(raters, config)
        .with_context(|| format!("case '{case_id}'"))?
        .evaluate(case_id, algorithm, pred)
}
