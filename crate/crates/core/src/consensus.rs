//! Per-class consensus regions derived from several raters.
//!
//! For each organ class, every voxel falls in exactly one of three regions:
//! foreground consensus (every rater labelled the class), background
//! consensus (no rater labelled the class) or dissensus (anything else).
//! Background consensus is one-vs-rest, so a voxel all raters call liver is
//! background consensus for pancreas. Any rater count `R >= 2` is accepted.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mask::VoxelMask;
use crate::volume::{GridGeometry, LabelVolume, Organ};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassRegions {
    pub fg: VoxelMask,
    pub bg: VoxelMask,
    pub dissensus: VoxelMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusRegions {
    geometry: GridGeometry,
    rater_count: usize,
    classes: [ClassRegions; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegionCounts {
    pub fg: usize,
    pub bg: usize,
    pub dissensus: usize,
}

impl RegionCounts {
    pub fn total(&self) -> usize {
        self.fg + self.bg + self.dissensus
    }
}

impl ConsensusRegions {
    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn rater_count(&self) -> usize {
        self.rater_count
    }

    pub fn class(&self, organ: Organ) -> &ClassRegions {
        &self.classes[organ.slot()]
    }

    /// Voxels in the dissensus region of at least one class.
    pub fn any_dissensus(&self) -> VoxelMask {
        let [a, b, c] = &self.classes;
        a.dissensus.union(&b.dissensus).union(&c.dissensus)
    }

    /// Audit label map for one class: 0 = background consensus, 1 = dissensus, 2 = foreground consensus.
    pub fn audit_labels(&self, organ: Organ) -> LabelVolume {
        let regions = self.class(organ);
        let voxels = (0..self.geometry.voxel_count())
            .map(|i| {
                if regions.fg.get(i) {
                    2
                } else if regions.dissensus.get(i) {
                    1
                } else {
                    0
                }
            })
            .collect();
        LabelVolume::new(self.geometry, voxels).expect("audit labels are valid class ids")
    }
}

pub fn derive_regions(raters: &[LabelVolume]) -> Result<ConsensusRegions> {
    if raters.len() < 2 {
        return Err(Error::Arity(format!(
            "consensus needs at least 2 raters, got {}",
            raters.len()
        )));
    }
    let geometry = *raters[0].geometry();
    for (k, r) in raters.iter().enumerate().skip(1) {
        geometry.ensure_compatible(r.geometry(), &format!("rater {}", k + 1))?;
    }
    let n = geometry.voxel_count();
    let rater_count = raters.len();
    let classes = Organ::ALL.map(|organ| {
        let id = organ.class_id();
        let mut fg = VoxelMask::new(n);
        let mut bg = VoxelMask::new(n);
        let mut dissensus = VoxelMask::new(n);
        for i in 0..n {
            let votes = raters.iter().filter(|r| r.voxels()[i] == id).count();
            if votes == rater_count {
                fg.set(i);
            } else if votes == 0 {
                bg.set(i);
            } else {
                dissensus.set(i);
            }
        }
        ClassRegions { fg, bg, dissensus }
    });
    Ok(ConsensusRegions { geometry, rater_count, classes })
}

pub fn region_counts(regions: &ConsensusRegions) -> [RegionCounts; 3] {
    Organ::ALL.map(|organ| {
        let c = regions.class(organ);
        RegionCounts { fg: c.fg.count(), bg: c.bg.count(), dissensus: c.dissensus.count() }
    })
}
