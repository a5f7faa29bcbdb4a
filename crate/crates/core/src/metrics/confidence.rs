//! Consensus confidence: how much class probability a model puts on the
//! consensus foreground (`c_f`) versus the consensus background (`c_b`),
//! combined as `c_seg = ((1 - c_b) + c_f) / 2`.

use serde::Serialize;

use crate::consensus::ConsensusRegions;
use crate::error::Result;
use crate::mask::VoxelMask;
use crate::numeric::CompensatedSum;
use crate::volume::{Organ, ProbabilityVolume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassConfidence {
    pub organ: Organ,
    /// Mean class probability over the consensus foreground; `None` if it is empty.
    pub c_f: Option<f64>,
    /// Mean class probability over the consensus background; `None` if it is empty.
    pub c_b: Option<f64>,
    pub c_seg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceScores {
    pub classes: Vec<ClassConfidence>,
    /// Mean `c_seg` over classes where it is defined.
    pub mean: Option<f64>,
}

pub fn combine(c_f: f64, c_b: f64) -> f64 {
    ((1.0 - c_b) + c_f) / 2.0
}

fn masked_mean(pred: &ProbabilityVolume, class_id: usize, mask: &VoxelMask) -> Option<f64> {
    let count = mask.count();
    if count == 0 {
        return None;
    }
    let channel = pred.channel(class_id);
    let sum: CompensatedSum = mask.iter_ones().map(|i| channel.get(i)).collect();
    Some(sum.value() / count as f64)
}

pub fn class_confidence(
    pred: &ProbabilityVolume,
    regions: &ConsensusRegions,
    organ: Organ,
) -> Result<ClassConfidence> {
    regions.geometry().ensure_compatible(pred.geometry(), "prediction vs raters")?;
    let class = regions.class(organ);
    let id = organ.class_id() as usize;
    let c_f = masked_mean(pred, id, &class.fg);
    let c_b = masked_mean(pred, id, &class.bg);
    let c_seg = c_f.zip(c_b).map(|(f, b)| combine(f, b));
    Ok(ClassConfidence { organ, c_f, c_b, c_seg })
}

pub fn confidence_scores(
    pred: &ProbabilityVolume,
    regions: &ConsensusRegions,
    organs: &[Organ],
) -> Result<ConfidenceScores> {
    let classes = organs
        .iter()
        .map(|&o| class_confidence(pred, regions, o))
        .collect::<Result<Vec<_>>>()?;
    let defined: Vec<f64> = classes.iter().filter_map(|c| c.c_seg).collect();
    let mean = crate::numeric::mean(&defined);
    Ok(ConfidenceScores { classes, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::derive_regions;
    use crate::volume::{GridGeometry, LabelVolume};

    fn setup() -> (GridGeometry, ConsensusRegions) {
        let g = GridGeometry::new([4, 1, 1], [1.0; 3]).unwrap();
        let r = LabelVolume::new(g, vec![1, 1, 0, 0]).unwrap();
        (g, derive_regions(&[r.clone(), r]).unwrap())
    }

    fn map(g: GridGeometry, pancreas: [f32; 4]) -> ProbabilityVolume {
        let mut data = vec![0f32; 16];
        for i in 0..4 {
            data[4 + i] = pancreas[i];
            data[i] = 1.0 - pancreas[i];
        }
        ProbabilityVolume::from_f32(g, data).unwrap()
    }

    #[test]
    fn extremes() {
        let (g, regions) = setup();
        let best = class_confidence(&map(g, [1.0, 1.0, 0.0, 0.0]), &regions, Organ::Pancreas).unwrap();
        assert_eq!(best.c_seg, Some(1.0));
        let worst = class_confidence(&map(g, [0.0, 0.0, 1.0, 1.0]), &regions, Organ::Pancreas).unwrap();
        assert_eq!(worst.c_seg, Some(0.0));
    }

    #[test]
    fn direct_substitution() {
        assert!((combine(0.9, 0.2) - 0.85).abs() < 1e-15);
    }

    #[test]
    fn uniform_quarter_maps_to_midpoint() {
        let (g, regions) = setup();
        let p = ProbabilityVolume::from_f32(g, vec![0.25; 16]).unwrap();
        let c = class_confidence(&p, &regions, Organ::Pancreas).unwrap();
        assert_eq!((c.c_f, c.c_b, c.c_seg), (Some(0.25), Some(0.25), Some(0.5)));
    }

    #[test]
    fn empty_foreground_is_skipped_from_mean() {
        let (g, regions) = setup();
        let s = confidence_scores(&map(g, [0.8, 0.6, 0.1, 0.1]), &regions, &Organ::ALL).unwrap();
        assert_eq!(s.classes[1].c_f, None);
        assert_eq!(s.classes[1].c_seg, None);
        let pancreas = s.classes[0].c_seg.unwrap();
        assert!((pancreas - combine(0.7, 0.1)).abs() < 1e-7);
        assert_eq!(s.mean, Some(pancreas));
    }
}
