//! Confidence expected calibration error (cECE).
//!
//! A voxel's confidence is its maximum softmax probability and it counts as
//! correct when the argmax class equals the rater's label. Voxels are binned
//! into `M` equal-width confidence bins over `[0, 1]` (the last bin is closed
//! on the right) and
//!
//! ```text
//! cECE = sum_m  w_m * |acc(B_m) - conf(B_m)|,   w_m = |B_m| / N
//! ```
//!
//! with `N` the number of evaluated voxels. [`EceWeighting::Literal`] uses
//! `w_m = |B_m| / M` instead, which is not a weighted average and is only
//! offered for comparison.

use serde::{Deserialize, Serialize};

use super::dice::argmax;
use crate::error::{Error, Result};
use crate::mask::VoxelMask;
use crate::numeric::CompensatedSum;
use crate::volume::{LabelVolume, Organ, ProbabilityVolume};

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EceWeighting {
    /// `|B_m| / N`.
    #[default]
    Sample,
    /// `|B_m| / M`.
    Literal,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EceMode {
    /// Max softmax over all four channels, correctness by argmax.
    #[default]
    Multiclass,
    /// One-vs-rest per organ: confidence `max(p, 1 - p)`, positive when `p > 0.5`.
    PerClassBinary,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EceScope {
    #[default]
    AllVoxels,
    /// Skip voxels in the dissensus region of any class.
    ExcludeDissensus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EceOptions {
    pub bins: usize,
    pub weighting: EceWeighting,
    pub mode: EceMode,
    pub scope: EceScope,
}

impl Default for EceOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            weighting: EceWeighting::default(),
            mode: EceMode::default(),
            scope: EceScope::default(),
        }
    }
}

impl EceOptions {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::parameter(format!("ECE needs at least 2 bins, got {}", self.bins)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationBins {
    pub bins: Vec<CalibrationBin>,
    /// Number of voxels binned (`N`).
    pub evaluated: usize,
    pub weighting: EceWeighting,
    pub cece: f64,
}

/// Bin of a confidence value; consistent with the bounds `k / M` reported per bin.
pub fn bin_index(confidence: f64, bins: usize) -> usize {
    let m = bins as f64;
    let mut k = ((confidence * m).floor().max(0.0) as usize).min(bins - 1);
    if k > 0 && confidence < k as f64 / m {
        k -= 1;
    } else if k + 1 < bins && confidence >= (k + 1) as f64 / m {
        k += 1;
    }
    k
}

struct BinAccumulator {
    counts: Vec<usize>,
    correct: Vec<usize>,
    confidence: Vec<CompensatedSum>,
}

impl BinAccumulator {
    fn new(bins: usize) -> Self {
        Self {
            counts: vec![0; bins],
            correct: vec![0; bins],
            confidence: vec![CompensatedSum::new(); bins],
        }
    }

    #[inline]
    fn push(&mut self, confidence: f64, correct: bool) {
        let k = bin_index(confidence, self.counts.len());
        self.counts[k] += 1;
        self.correct[k] += usize::from(correct);
        self.confidence[k].add(confidence);
    }

    fn finish(self, weighting: EceWeighting) -> CalibrationBins {
        let m = self.counts.len();
        let evaluated: usize = self.counts.iter().sum();
        let mut total = CompensatedSum::new();
        let bins = (0..m)
            .map(|k| {
                let count = self.counts[k];
                let (mean_confidence, accuracy) = if count == 0 {
                    (None, None)
                } else {
                    let conf = self.confidence[k].value() / count as f64;
                    let acc = self.correct[k] as f64 / count as f64;
                    let weight = match weighting {
                        EceWeighting::Sample => count as f64 / evaluated as f64,
                        EceWeighting::Literal => count as f64 / m as f64,
                    };
                    total.add(weight * (acc - conf).abs());
                    (Some(conf), Some(acc))
                };
                CalibrationBin {
                    lower: k as f64 / m as f64,
                    upper: (k + 1) as f64 / m as f64,
                    count,
                    mean_confidence,
                    accuracy,
                }
            })
            .collect();
        CalibrationBins { bins, evaluated, weighting, cece: total.value() }
    }
}

fn check(pred: &ProbabilityVolume, rater: &LabelVolume, options: &EceOptions, include: Option<&VoxelMask>) -> Result<()> {
    options.validate()?;
    rater.geometry().ensure_compatible(pred.geometry(), "prediction vs rater")?;
    if let Some(mask) = include {
        if mask.len() != pred.geometry().voxel_count() {
            return Err(Error::shape("ECE voxel mask does not match the grid"));
        }
    }
    Ok(())
}

fn for_each_voxel(n: usize, include: Option<&VoxelMask>, mut f: impl FnMut(usize)) {
    match include {
        Some(mask) => mask.iter_ones().for_each(f),
        None => (0..n).for_each(&mut f),
    }
}

/// Multiclass cECE against one rater with default options and `bins` bins.
pub fn cece(pred: &ProbabilityVolume, rater: &LabelVolume, bins: usize) -> Result<CalibrationBins> {
    let options = EceOptions { bins, ..EceOptions::default() };
    cece_multiclass(pred, rater, &options, None)
}

/// Multiclass cECE against one rater, optionally restricted to `include`d voxels.
pub fn cece_multiclass(
    pred: &ProbabilityVolume,
    rater: &LabelVolume,
    options: &EceOptions,
    include: Option<&VoxelMask>,
) -> Result<CalibrationBins> {
    check(pred, rater, options, include)?;
    let labels = rater.voxels();
    let mut acc = BinAccumulator::new(options.bins);
    for_each_voxel(labels.len(), include, |i| {
        let probs = pred.voxel(i);
        let winner = argmax(&probs);
        acc.push(probs[winner], winner == usize::from(labels[i]));
    });
    Ok(acc.finish(options.weighting))
}

/// One-vs-rest cECE for a single organ against one rater.
pub fn cece_binary(
    pred: &ProbabilityVolume,
    rater: &LabelVolume,
    organ: Organ,
    options: &EceOptions,
    include: Option<&VoxelMask>,
) -> Result<CalibrationBins> {
    check(pred, rater, options, include)?;
    let labels = rater.voxels();
    let channel = pred.channel(organ.class_id() as usize);
    let id = organ.class_id();
    let mut acc = BinAccumulator::new(options.bins);
    for_each_voxel(labels.len(), include, |i| {
        let p = channel.get(i);
        let positive = p > 0.5;
        acc.push(p.max(1.0 - p), positive == (labels[i] == id));
    });
    Ok(acc.finish(options.weighting))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiRaterCalibration {
    /// Case-level cECE: mean over raters (and over organs in per-class mode).
    pub cece: f64,
    pub per_rater: Vec<f64>,
    /// Per-organ cECE averaged over raters; only in per-class mode.
    pub per_class: Option<Vec<(Organ, f64)>>,
}

/// cECE against each rater separately, averaged with equal weights.
pub fn cece_multirater(
    pred: &ProbabilityVolume,
    raters: &[LabelVolume],
    options: &EceOptions,
    organs: &[Organ],
    include: Option<&VoxelMask>,
) -> Result<MultiRaterCalibration> {
    if raters.is_empty() {
        return Err(Error::Arity("cECE needs at least one rater".into()));
    }
    let r = raters.len() as f64;
    match options.mode {
        EceMode::Multiclass => {
            let per_rater = raters
                .iter()
                .map(|rater| cece_multiclass(pred, rater, options, include).map(|b| b.cece))
                .collect::<Result<Vec<_>>>()?;
            let cece = per_rater.iter().sum::<f64>() / r;
            Ok(MultiRaterCalibration { cece, per_rater, per_class: None })
        }
        EceMode::PerClassBinary => {
            if organs.is_empty() {
                return Err(Error::parameter("per-class cECE needs at least one organ"));
            }
            let mut per_class = vec![0.0; organs.len()];
            let mut per_rater = Vec::with_capacity(raters.len());
            for rater in raters {
                let mut rater_sum = 0.0;
                for (k, &organ) in organs.iter().enumerate() {
                    let v = cece_binary(pred, rater, organ, options, include)?.cece;
                    per_class[k] += v / r;
                    rater_sum += v;
                }
                per_rater.push(rater_sum / organs.len() as f64);
            }
            let cece = per_rater.iter().sum::<f64>() / r;
            let per_class = organs.iter().copied().zip(per_class).collect();
            Ok(MultiRaterCalibration { cece, per_rater, per_class: Some(per_class) })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::GridGeometry;

    fn line(n: usize) -> GridGeometry {
        GridGeometry::new([n, 1, 1], [1.0; 3]).unwrap()
    }

    /// Map where each voxel's winning channel is `class` with probability `conf`,
    /// the remainder going to the next channel.
    fn peaked(g: GridGeometry, voxels: &[(usize, f64)]) -> ProbabilityVolume {
        let n = g.voxel_count();
        let mut data = vec![0f64; 4 * n];
        for (i, &(class, conf)) in voxels.iter().enumerate() {
            data[class * n + i] = conf;
            data[((class + 1) % 4) * n + i] += 1.0 - conf;
        }
        ProbabilityVolume::from_f64(g, data).unwrap()
    }

    #[test]
    fn one_hot_correct_is_zero() {
        let g = line(8);
        let labels = LabelVolume::new(g, vec![0, 1, 2, 3, 3, 2, 1, 0]).unwrap();
        let p = ProbabilityVolume::one_hot(&labels);
        assert_eq!(cece(&p, &labels, 10).unwrap().cece, 0.0);
    }

    #[test]
    fn single_occupied_bin() {
        // 10 voxels at confidence 0.75 predicting class 1, 6 of them labelled 1
        let g = line(10);
        let p = peaked(g, &[(1, 0.75); 10]);
        let labels = LabelVolume::new(g, vec![1, 1, 1, 1, 1, 1, 0, 0, 0, 0]).unwrap();
        let bins = cece(&p, &labels, 10).unwrap();
        assert_eq!(bins.evaluated, 10);
        assert_eq!(bins.bins.iter().filter(|b| b.count > 0).count(), 1);
        assert!((bins.cece - 0.15).abs() < 1e-12);
    }

    #[test]
    fn two_occupied_bins() {
        let g = line(10);
        let mut vox = vec![(2, 0.95); 4];
        vox.extend([(2, 0.55); 6]);
        let p = peaked(g, &vox);
        let labels = LabelVolume::new(g, vec![2, 2, 2, 2, 2, 2, 2, 0, 0, 0]).unwrap();
        let bins = cece(&p, &labels, 10).unwrap();
        assert!((bins.cece - 0.05).abs() < 1e-12, "{}", bins.cece);
    }

    #[test]
    fn literal_weighting_divides_by_bin_count() {
        let g = line(10);
        let p = peaked(g, &[(1, 0.75); 10]);
        let labels = LabelVolume::new(g, vec![1, 1, 1, 1, 1, 1, 0, 0, 0, 0]).unwrap();
        let opts = EceOptions { bins: 10, weighting: EceWeighting::Literal, ..Default::default() };
        let bins = cece_multiclass(&p, &labels, &opts, None).unwrap();
        // |B| / M = 10 / 10
        assert!((bins.cece - 0.15).abs() < 1e-12);
        let opts = EceOptions { bins: 5, ..opts };
        assert!((cece_multiclass(&p, &labels, &opts, None).unwrap().cece - 0.3).abs() < 1e-12);
    }

    #[test]
    fn bin_edges() {
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.3, 10), 3);
        assert_eq!(bin_index(0.7, 10), 7);
        assert_eq!(bin_index(0.5, 2), 1);
        for m in [2usize, 3, 5, 7, 10, 15] {
            for k in 0..=1000 {
                let c = k as f64 / 1000.0;
                let b = bin_index(c, m);
                assert!(c >= b as f64 / m as f64);
                assert!(c < (b + 1) as f64 / m as f64 || b == m - 1);
            }
        }
    }

    #[test]
    fn bin_count_below_two_rejected() {
        let g = line(2);
        let labels = LabelVolume::new(g, vec![0, 1]).unwrap();
        let p = ProbabilityVolume::one_hot(&labels);
        assert_eq!(cece(&p, &labels, 1).unwrap_err().kind(), crate::ErrorKind::Parameter);
    }

    #[test]
    fn multirater_mean() {
        let g = line(10);
        let p = peaked(g, &[(1, 0.75); 10]);
        let six = LabelVolume::new(g, vec![1, 1, 1, 1, 1, 1, 0, 0, 0, 0]).unwrap();
        let all = LabelVolume::filled(g, 1).unwrap();
        let none = LabelVolume::filled(g, 0).unwrap();
        let opts = EceOptions::default();
        let same = cece_multirater(&p, &[six.clone(), six.clone(), six.clone()], &opts, &Organ::ALL, None)
            .unwrap();
        assert!((same.cece - 0.15).abs() < 1e-12);
        let mixed = cece_multirater(&p, &[six, all, none], &opts, &Organ::ALL, None).unwrap();
        assert!((mixed.cece - (0.15 + 0.25 + 0.75) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dissensus_exclusion_shrinks_sample() {
        let g = line(4);
        let labels = LabelVolume::new(g, vec![0, 1, 1, 0]).unwrap();
        let p = ProbabilityVolume::one_hot(&LabelVolume::new(g, vec![0, 1, 0, 0]).unwrap());
        let include: VoxelMask = [true, true, false, true].into_iter().collect();
        let opts = EceOptions::default();
        assert!((cece_multiclass(&p, &labels, &opts, None).unwrap().cece - 0.25).abs() < 1e-15);
        let restricted = cece_multiclass(&p, &labels, &opts, Some(&include)).unwrap();
        assert_eq!(restricted.evaluated, 3);
        assert_eq!(restricted.cece, 0.0);
    }

    #[test]
    fn binary_mode_per_class() {
        let g = line(4);
        let labels = LabelVolume::new(g, vec![0, 1, 1, 0]).unwrap();
        let p = ProbabilityVolume::one_hot(&labels);
        let opts = EceOptions { mode: EceMode::PerClassBinary, ..Default::default() };
        let r = cece_multirater(&p, &[labels.clone(), labels], &opts, &Organ::ALL, None).unwrap();
        assert_eq!(r.cece, 0.0);
        assert_eq!(r.per_class.unwrap().len(), 3);
    }
}
