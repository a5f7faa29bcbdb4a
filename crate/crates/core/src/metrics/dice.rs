//! Dice score restricted to consensus regions.
//!
//! Predicted voxels inside the consensus background are false positives,
//! missed voxels inside the consensus foreground are false negatives, and
//! dissensus voxels are ignored entirely.

use serde::{Deserialize, Serialize};

use crate::consensus::ConsensusRegions;
use crate::error::{Error, Result};
use crate::volume::{Organ, ProbabilityVolume, CHANNELS};

/// Rule turning a probability map into a binary class-`c` prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum Binarization {
    /// `p_c >= tau` on the class channel.
    Threshold { tau: f64 },
    /// The class wins the per-voxel argmax (lowest class id on ties).
    Argmax,
}

impl Default for Binarization {
    fn default() -> Self {
        Binarization::Threshold { tau: 0.5 }
    }
}

impl Binarization {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Binarization::Threshold { tau } if !(tau > 0.0 && tau < 1.0) => {
                Err(Error::parameter(format!("DSC threshold must lie in (0, 1), got {tau}")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn predicts(&self, pred: &ProbabilityVolume, organ: Organ, voxel: usize) -> bool {
        match *self {
            Binarization::Threshold { tau } => pred.get(organ.class_id() as usize, voxel) >= tau,
            Binarization::Argmax => argmax(&pred.voxel(voxel)) == organ.class_id() as usize,
        }
    }
}

/// Index of the largest probability; the lowest index wins ties.
#[inline]
pub fn argmax(probs: &[f64; CHANNELS]) -> usize {
    let mut best = 0;
    for c in 1..CHANNELS {
        if probs[c] > probs[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiceScore {
    pub dice: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Set when consensus foreground and consensus-background predictions are both empty;
    /// the score is then 1 by convention.
    pub empty_consensus: bool,
}

pub fn dsc_consensus(
    pred: &ProbabilityVolume,
    regions: &ConsensusRegions,
    organ: Organ,
    binarization: Binarization,
) -> Result<DiceScore> {
    binarization.validate()?;
    regions.geometry().ensure_compatible(pred.geometry(), "prediction vs raters")?;
    let class = regions.class(organ);
    let fg = class.fg.count();
    let tp = class.fg.iter_ones().filter(|&i| binarization.predicts(pred, organ, i)).count();
    let fp = class.bg.iter_ones().filter(|&i| binarization.predicts(pred, organ, i)).count();
    let fn_ = fg - tp;
    let denom = 2 * tp + fp + fn_;
    let (dice, empty) = if denom == 0 { (1.0, true) } else { (2.0 * tp as f64 / denom as f64, false) };
    Ok(DiceScore {
        dice,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        empty_consensus: empty,
    })
}
