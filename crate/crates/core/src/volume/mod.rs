//! In-memory voxel grids: geometry, label maps and per-class probability maps.
//!
//! Voxels are stored x-fastest (`i = x + nx * (y + ny * z)`), which is also
//! the NIfTI payload order, so decoded payloads are used without reordering.

mod desk;
mod nifti;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use desk::{read_desk, write_desk};
pub use nifti::{
    read_header, read_label_nifti, read_nifti, read_probability_nifti, write_label_nifti_as,
    write_nifti, NiftiDtype, NiftiHeader,
};

/// Maximum allowed deviation of a voxel's channel sum from 1.
pub const CHANNEL_SUM_TOLERANCE: f64 = 1e-3;

/// Spacing tolerance (mm) when comparing geometries of volumes of one case.
pub const SPACING_TOLERANCE_MM: f64 = 1e-3;

/// Number of channels in a probability map: background plus three organs.
pub const CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    dims: [usize; 3],
    spacing: [f64; 3],
}

impl GridGeometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::validation(format!("grid dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::validation(format!(
                "voxel spacing must be finite and > 0, got {spacing:?}"
            )));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::validation(format!("grid {dims:?} overflows voxel count")))?;
        Ok(Self { dims, spacing })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Spacing in millimetres per voxel along x, y, z.
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn voxel_volume_cm3(&self) -> f64 {
        self.spacing.iter().product::<f64>() / 1000.0
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Same dims exactly and spacing within [`SPACING_TOLERANCE_MM`].
    pub fn is_compatible(&self, other: &GridGeometry) -> bool {
        self.dims == other.dims
            && self
                .spacing
                .iter()
                .zip(other.spacing.iter())
                .all(|(a, b)| (a - b).abs() <= SPACING_TOLERANCE_MM)
    }

    pub fn ensure_compatible(&self, other: &GridGeometry, what: &str) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: grid {:?} @ {:?} mm does not match {:?} @ {:?} mm",
                other.dims, other.spacing, self.dims, self.spacing
            )))
        }
    }
}

/// Foreground structure evaluated per class. Class id 0 is background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Organ {
    Pancreas = 1,
    Kidney = 2,
    Liver = 3,
}

impl Organ {
    pub const ALL: [Organ; 3] = [Organ::Pancreas, Organ::Kidney, Organ::Liver];

    pub fn class_id(self) -> u8 {
        self as u8
    }

    pub fn from_class_id(id: u8) -> Option<Organ> {
        match id {
            1 => Some(Organ::Pancreas),
            2 => Some(Organ::Kidney),
            3 => Some(Organ::Liver),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Organ::Pancreas => "pancreas",
            Organ::Kidney => "kidney",
            Organ::Liver => "liver",
        }
    }

    /// Position in per-organ arrays (`[pancreas, kidney, liver]`).
    pub fn slot(self) -> usize {
        self as usize - 1
    }
}

impl fmt::Display for Organ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Organ {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pancreas" | "1" => Ok(Organ::Pancreas),
            "kidney" | "kidneys" | "2" => Ok(Organ::Kidney),
            "liver" | "3" => Ok(Organ::Liver),
            other => Err(Error::parameter(format!("unknown organ class '{other}'"))),
        }
    }
}

/// Integer class map of one rater (or a binarized prediction).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    geometry: GridGeometry,
    voxels: Vec<u8>,
}

impl LabelVolume {
    pub fn new(geometry: GridGeometry, voxels: Vec<u8>) -> Result<Self> {
        if voxels.len() != geometry.voxel_count() {
            return Err(Error::shape(format!(
                "label volume has {} voxels, grid {:?} needs {}",
                voxels.len(),
                geometry.dims(),
                geometry.voxel_count()
            )));
        }
        if let Some(pos) = voxels.iter().position(|&v| v > 3) {
            return Err(Error::validation(format!(
                "invalid class id {} at voxel {:?} (expected 0..=3)",
                voxels[pos],
                geometry.coords(pos)
            )));
        }
        Ok(Self { geometry, voxels })
    }

    pub fn filled(geometry: GridGeometry, class_id: u8) -> Result<Self> {
        Self::new(geometry, vec![class_id; geometry.voxel_count()])
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn voxels(&self) -> &[u8] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<u8> {
        self.voxels
    }

    pub fn class_count(&self, organ: Organ) -> usize {
        let id = organ.class_id();
        self.voxels.iter().filter(|&&v| v == id).count()
    }
}

/// Storage precision of a probability map, kept so files round-trip bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Channel-major probability payload (`[background | pancreas | kidney | liver]`).
#[derive(Debug, Clone, PartialEq)]
pub enum ProbData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl ProbData {
    fn len(&self) -> usize {
        match self {
            ProbData::F32(v) => v.len(),
            ProbData::F64(v) => v.len(),
        }
    }

    #[inline]
    fn get(&self, i: usize) -> f64 {
        match self {
            ProbData::F32(v) => f64::from(v[i]),
            ProbData::F64(v) => v[i],
        }
    }
}

/// Borrowed view on one channel of a [`ProbabilityVolume`].
#[derive(Debug, Clone, Copy)]
pub enum ChannelView<'a> {
    F32(&'a [f32]),
    F64(&'a [f64]),
}

impl ChannelView<'_> {
    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        match self {
            ChannelView::F32(v) => f64::from(v[i]),
            ChannelView::F64(v) => v[i],
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ChannelView::F32(v) => v.len(),
            ChannelView::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }
}

/// How channel sums outside [`CHANNEL_SUM_TOLERANCE`] are handled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SumPolicy {
    /// Reject the volume, naming the worst voxel.
    #[default]
    Strict,
    /// Divide each voxel by its channel sum.
    Renormalize,
}

/// Per-class softmax output over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    geometry: GridGeometry,
    data: ProbData,
}

impl ProbabilityVolume {
    /// Builds and validates a probability map from channel-major data.
    pub fn new(geometry: GridGeometry, data: ProbData, policy: SumPolicy) -> Result<Self> {
        let expected = geometry.voxel_count() * CHANNELS;
        if data.len() != expected {
            return Err(Error::shape(format!(
                "probability volume has {} values, grid {:?} x {CHANNELS} channels needs {expected}",
                data.len(),
                geometry.dims()
            )));
        }
        let mut volume = Self { geometry, data };
        if policy == SumPolicy::Renormalize {
            volume.renormalize()?;
        }
        volume.validate()?;
        Ok(volume)
    }

    pub fn from_f32(geometry: GridGeometry, data: Vec<f32>) -> Result<Self> {
        Self::new(geometry, ProbData::F32(data), SumPolicy::Strict)
    }

    pub fn from_f64(geometry: GridGeometry, data: Vec<f64>) -> Result<Self> {
        Self::new(geometry, ProbData::F64(data), SumPolicy::Strict)
    }

    /// One-hot encoding of a label map, stored as f32.
    pub fn one_hot(labels: &LabelVolume) -> Self {
        let n = labels.geometry().voxel_count();
        let mut data = vec![0f32; n * CHANNELS];
        for (i, &label) in labels.voxels().iter().enumerate() {
            data[usize::from(label) * n + i] = 1.0;
        }
        Self { geometry: *labels.geometry(), data: ProbData::F32(data) }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn precision(&self) -> Precision {
        match self.data {
            ProbData::F32(_) => Precision::F32,
            ProbData::F64(_) => Precision::F64,
        }
    }

    pub fn data(&self) -> &ProbData {
        &self.data
    }

    pub fn channel(&self, class_id: usize) -> ChannelView<'_> {
        let n = self.geometry.voxel_count();
        let range = class_id * n..(class_id + 1) * n;
        match &self.data {
            ProbData::F32(v) => ChannelView::F32(&v[range]),
            ProbData::F64(v) => ChannelView::F64(&v[range]),
        }
    }

    #[inline]
    pub fn get(&self, class_id: usize, voxel: usize) -> f64 {
        self.data.get(class_id * self.geometry.voxel_count() + voxel)
    }

    #[inline]
    pub fn voxel(&self, voxel: usize) -> [f64; CHANNELS] {
        let n = self.geometry.voxel_count();
        std::array::from_fn(|c| self.data.get(c * n + voxel))
    }

    /// Checks value range and the per-voxel channel-sum tolerance.
    pub fn validate(&self) -> Result<()> {
        let n = self.geometry.voxel_count();
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let probs = self.voxel(i);
            if let Some(c) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::validation(format!(
                    "probability {} outside [0, 1] in channel {c} at voxel {:?}",
                    probs[c],
                    self.geometry.coords(i)
                )));
            }
            let dev = (probs.iter().sum::<f64>() - 1.0).abs();
            if dev > CHANNEL_SUM_TOLERANCE && worst.map_or(true, |(_, w)| dev > w) {
                worst = Some((i, dev));
            }
        }
        match worst {
            None => Ok(()),
            Some((i, dev)) => Err(Error::validation(format!(
                "channel sum deviates from 1 by {dev:.6} at voxel {:?} (worst voxel; tolerance {CHANNEL_SUM_TOLERANCE})",
                self.geometry.coords(i)
            ))),
        }
    }

    /// Divides every voxel by its channel sum. Zero-sum voxels are an error.
    pub fn renormalize(&mut self) -> Result<()> {
        let n = self.geometry.voxel_count();
        let geometry = self.geometry;
        fn apply<T: Copy + Into<f64>>(
            v: &mut [T],
            n: usize,
            geometry: &GridGeometry,
            from: impl Fn(f64) -> T,
        ) -> Result<()> {
            for i in 0..n {
                let sum: f64 = (0..CHANNELS).map(|c| v[c * n + i].into()).sum();
                if !(sum.is_finite() && sum > 0.0) {
                    return Err(Error::validation(format!(
                        "cannot renormalize voxel {:?} with channel sum {sum}",
                        geometry.coords(i)
                    )));
                }
                for c in 0..CHANNELS {
                    let x: f64 = v[c * n + i].into();
                    v[c * n + i] = from(x / sum);
                }
            }
            Ok(())
        }
        match &mut self.data {
            ProbData::F32(v) => apply(v, n, &geometry, |x| x as f32),
            ProbData::F64(v) => apply(v, n, &geometry, |x| x),
        }
    }
}

/// A decoded volume of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Labels(LabelVolume),
    Probabilities(ProbabilityVolume),
}

impl Volume {
    pub fn geometry(&self) -> &GridGeometry {
        match self {
            Volume::Labels(v) => v.geometry(),
            Volume::Probabilities(v) => v.geometry(),
        }
    }
}

/// Options honoured when decoding volumes from disk.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    pub sum_policy: SumPolicy,
}

fn is_desk_path(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Reads a volume from either NIfTI (`.nii`, `.nii.gz`) or desk format (`.json`).
pub fn read_volume(path: impl AsRef<Path>, options: ReadOptions) -> Result<Volume> {
    let path = path.as_ref();
    if is_desk_path(path) {
        read_desk(path, options)
    } else {
        read_nifti(path, options)
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    match read_volume(path.as_ref(), ReadOptions::default())? {
        Volume::Labels(v) => Ok(v),
        Volume::Probabilities(_) => Err(Error::shape(format!(
            "{}: expected a 3D label volume, found a 4D probability map",
            path.as_ref().display()
        ))),
    }
}

pub fn read_probabilities(path: impl AsRef<Path>, options: ReadOptions) -> Result<ProbabilityVolume> {
    match read_volume(path.as_ref(), options)? {
        Volume::Probabilities(v) => Ok(v),
        Volume::Labels(_) => Err(Error::shape(format!(
            "{}: expected a 4D probability map, found a 3D label volume",
            path.as_ref().display()
        ))),
    }
}

/// Writes NIfTI unless the path ends in `.json`, in which case desk format is used.
pub fn write_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_desk_path(path) {
        write_desk(volume, path)
    } else {
        write_nifti(volume, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(dims: [usize; 3]) -> GridGeometry {
        GridGeometry::new(dims, [1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn geometry_rejects_degenerate_grids() {
        assert!(GridGeometry::new([0, 1, 1], [1.0; 3]).is_err());
        assert!(GridGeometry::new([1, 1, 1], [1.0, 0.0, 1.0]).is_err());
        assert!(GridGeometry::new([1, 1, 1], [1.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn voxel_volume_in_cm3() {
        let g = GridGeometry::new([2, 2, 2], [0.5, 0.5, 2.0]).unwrap();
        assert_eq!(g.voxel_volume_cm3(), 0.0005);
    }

    #[test]
    fn index_coords_inverse() {
        let g = geom([3, 4, 5]);
        for i in 0..g.voxel_count() {
            let [x, y, z] = g.coords(i);
            assert_eq!(g.index(x, y, z), i);
        }
    }

    #[test]
    fn compatibility_uses_spacing_tolerance() {
        let a = GridGeometry::new([4, 4, 4], [1.0, 1.0, 1.0]).unwrap();
        let b = GridGeometry::new([4, 4, 4], [1.0005, 1.0, 1.0]).unwrap();
        let c = GridGeometry::new([4, 4, 4], [1.01, 1.0, 1.0]).unwrap();
        assert!(a.is_compatible(&b));
        assert!(!a.is_compatible(&c));
        assert!(a.ensure_compatible(&c, "rater 2").is_err());
    }

    #[test]
    fn label_volume_rejects_bad_class_ids() {
        let err = LabelVolume::new(geom([2, 1, 1]), vec![0, 7]).unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Validation);
        assert!(LabelVolume::new(geom([2, 1, 1]), vec![0]).is_err());
    }

    #[test]
    fn probability_sum_violation_names_worst_voxel() {
        let g = geom([3, 1, 1]);
        let mut data = vec![0f32; 12];
        // voxel 0 fine, voxel 1 sum 1.01, voxel 2 sum 1.2
        data[0] = 1.0;
        data[1] = 0.51;
        data[3 + 1] = 0.5;
        data[2] = 0.6;
        data[3 + 2] = 0.6;
        let err = ProbabilityVolume::from_f32(g, data.clone()).unwrap_err().to_string();
        assert!(err.contains("[2, 0, 0]"), "{err}");

        let renorm = ProbabilityVolume::new(g, ProbData::F32(data), SumPolicy::Renormalize).unwrap();
        assert!((renorm.get(0, 2) - 0.5).abs() < 1e-7);
        assert!((renorm.get(1, 1) - 0.5 / 1.01).abs() < 1e-7);
    }

    #[test]
    fn probability_range_is_enforced() {
        let g = geom([1, 1, 1]);
        assert!(ProbabilityVolume::from_f64(g, vec![1.2, -0.2, 0.0, 0.0]).is_err());
        assert!(ProbabilityVolume::from_f64(g, vec![0.25; 4]).is_ok());
    }

    #[test]
    fn one_hot_matches_labels() {
        let labels = LabelVolume::new(geom([4, 1, 1]), vec![0, 1, 2, 3]).unwrap();
        let p = ProbabilityVolume::one_hot(&labels);
        for i in 0..4 {
            let v = p.voxel(i);
            assert_eq!(v[i], 1.0);
            assert_eq!(v.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn organ_parsing() {
        assert_eq!("Liver".parse::<Organ>().unwrap(), Organ::Liver);
        assert_eq!("kidneys".parse::<Organ>().unwrap(), Organ::Kidney);
        assert!("spleen".parse::<Organ>().is_err());
        assert_eq!(Organ::from_class_id(2), Some(Organ::Kidney));
        assert_eq!(Organ::Liver.slot(), 2);
    }
}
