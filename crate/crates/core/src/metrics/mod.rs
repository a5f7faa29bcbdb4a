//! Per-case metrics: consensus Dice, consensus confidence, calibration error
//! and volumetric CRPS.

mod calibration;
mod case;
mod confidence;
mod dice;
mod volume;

pub use calibration::{
    bin_index, cece, cece_binary, cece_multiclass, cece_multirater, CalibrationBin,
    CalibrationBins, EceMode, EceOptions, EceScope, EceWeighting, MultiRaterCalibration,
    DEFAULT_BINS,
};
pub use case::{evaluate_case, CaseEvaluator, CaseMetrics, ClassMetrics, EvalConfig};
pub use confidence::{class_confidence, combine as combine_confidence, confidence_scores, ClassConfidence, ConfidenceScores};
pub use dice::{argmax, dsc_consensus, Binarization, DiceScore};
pub use volume::{
    crps_gaussian, distribution_of, predicted_volume, rater_volume_distribution, VolumeDistribution,
};
