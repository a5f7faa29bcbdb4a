//! Synthetic multi-rater datasets with exactly known ground truth.
//!
//! Each organ is a sphere. Rater `r` labels a voxel as the organ when the
//! voxel centre lies within `radius + delta_r`, so rater disagreement forms
//! spherical shells. Region counts and rater volumes are recorded from an
//! exhaustive scan of the sphere geometry at generation time.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::manifest::{CaseDocument, Group, ManifestDocument};
use crate::numeric::{std_dev, SigmaConvention};
use crate::rng::StreamRng;
use crate::volume::{
    write_volume, GridGeometry, LabelVolume, Organ, ProbData, ProbabilityVolume, SumPolicy, Volume,
    CHANNELS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereSpec {
    pub organ: Organ,
    /// Centre in voxel coordinates.
    pub center: [f64; 3],
    /// Radius in voxels.
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum PredictionModel {
    /// One-hot map of the voxels all raters agree on.
    Perfect,
    /// Perfect map convolved with a separable Gaussian of `sigma` voxels.
    Blurred { sigma: f64 },
    /// Blurred map whose winning channel is shifted by `delta`, the other
    /// channels rescaled to keep the voxel summing to one.
    Miscalibrated {
        delta: f64,
        #[serde(default = "default_miscalibration_sigma")]
        sigma: f64,
    },
}

fn default_miscalibration_sigma() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub spheres: Vec<SphereSpec>,
    /// Integer radius offset per rater; the rater count is the length.
    pub rater_deltas: Vec<i32>,
    pub prediction: PredictionModel,
    /// Voxels added to the unanimous radius before the prediction is rendered.
    #[serde(default)]
    pub radius_offset: f64,
    /// Amplitude of uniform noise added to every channel before renormalizing.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTruth {
    pub organ: Organ,
    pub rater_volumes_cm3: Vec<f64>,
    pub mean_cm3: f64,
    /// Population standard deviation.
    pub std_cm3: f64,
    pub fg: usize,
    pub bg: usize,
    pub dissensus: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub classes: Vec<ClassTruth>,
}

impl PhantomTruth {
    pub fn class(&self, organ: Organ) -> &ClassTruth {
        self.classes.iter().find(|c| c.organ == organ).expect("truth covers every organ")
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub raters: Vec<LabelVolume>,
    pub prediction: ProbabilityVolume,
    pub truth: PhantomTruth,
}

fn validate_model(model: &PredictionModel, noise: f64) -> Result<()> {
    match *model {
        PredictionModel::Perfect => {}
        PredictionModel::Blurred { sigma } => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::validation(format!("blur sigma must be > 0, got {sigma}")));
            }
        }
        PredictionModel::Miscalibrated { delta, sigma } => {
            if !(delta > -1.0 && delta < 1.0) {
                return Err(Error::validation(format!("miscalibration delta must lie in (-1, 1), got {delta}")));
            }
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::validation(format!("blur sigma must be > 0, got {sigma}")));
            }
        }
    }
    if !(0.0..1.0).contains(&noise) {
        return Err(Error::validation(format!("noise must lie in [0, 1), got {noise}")));
    }
    Ok(())
}

/// Radius offsets spanned by the raters and any prediction offsets.
fn delta_range(deltas: &[i32], offsets: impl IntoIterator<Item = f64>) -> Result<(f64, f64)> {
    if deltas.len() < 2 {
        return Err(Error::validation(format!("phantom needs at least 2 raters, got {}", deltas.len())));
    }
    let lo = f64::from(*deltas.iter().min().unwrap());
    let hi = f64::from(*deltas.iter().max().unwrap());
    let mut range = (lo, hi);
    for off in offsets {
        if !off.is_finite() {
            return Err(Error::validation(format!("radius offset must be finite, got {off}")));
        }
        range = (range.0.min(lo + off), range.1.max(lo + off));
    }
    Ok(range)
}

/// Checks sphere placement: radii, grid bounds (with `margin` extra voxels) and pairwise disjointness.
fn validate_spheres(dims: [usize; 3], spheres: &[SphereSpec], (min_delta, max_delta): (f64, f64), margin: f64) -> Result<()> {
    for (k, s) in spheres.iter().enumerate() {
        if spheres[..k].iter().any(|o| o.organ == s.organ) {
            return Err(Error::validation(format!("organ {} has more than one sphere", s.organ)));
        }
        if !(s.radius.is_finite() && s.radius + min_delta >= 1.0) {
            return Err(Error::validation(format!(
                "{} sphere radius {} with rater delta {min_delta} falls below 1 voxel",
                s.organ, s.radius
            )));
        }
        let reach = s.radius + max_delta + margin;
        for axis in 0..3 {
            let c = s.center[axis];
            if !(c - reach >= 0.0 && c + reach <= (dims[axis] - 1) as f64) {
                return Err(Error::validation(format!(
                    "{} sphere (centre {:?}, radius {} + {max_delta}) leaves the grid along axis {axis}",
                    s.organ, s.center, s.radius
                )));
            }
        }
        for o in &spheres[..k] {
            let dist = (0..3).map(|a| (s.center[a] - o.center[a]).powi(2)).sum::<f64>().sqrt();
            if dist <= s.radius + o.radius + 2.0 * max_delta {
                return Err(Error::validation(format!(
                    "{} and {} spheres overlap after maximal perturbation",
                    s.organ, o.organ
                )));
            }
        }
    }
    Ok(())
}

impl PhantomSpec {
    pub fn geometry(&self) -> Result<GridGeometry> {
        GridGeometry::new(self.dims, self.spacing_mm)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        let range = delta_range(&self.rater_deltas, [self.radius_offset])?;
        validate_spheres(self.dims, &self.spheres, range, 0.0)?;
        validate_model(&self.prediction, self.noise)
    }

    pub fn generate(&self) -> Result<Phantom> {
        self.validate()?;
        let geometry = self.geometry()?;
        let raters = render_raters(geometry, &self.spheres, &self.rater_deltas);
        let truth = truth_scan(geometry, &self.spheres, &self.rater_deltas);
        let mut rng = StreamRng::new(self.seed, 0);
        let prediction = render_prediction(
            geometry,
            &self.spheres,
            &self.rater_deltas,
            &PredictionSpec { model: self.prediction, radius_offset: self.radius_offset, noise: self.noise },
            &mut rng,
        )?;
        Ok(Phantom { raters, prediction, truth })
    }
}

#[inline]
fn dist2(x: usize, y: usize, z: usize, c: &[f64; 3]) -> f64 {
    (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (z as f64 - c[2]).powi(2)
}

/// Label maps of every rater.
pub fn render_raters(geometry: GridGeometry, spheres: &[SphereSpec], deltas: &[i32]) -> Vec<LabelVolume> {
    deltas
        .iter()
        .map(|&d| label_map(geometry, spheres, |s| s.radius + f64::from(d)))
        .collect()
}

fn label_map(geometry: GridGeometry, spheres: &[SphereSpec], radius: impl Fn(&SphereSpec) -> f64) -> LabelVolume {
    let [nx, ny, nz] = geometry.dims();
    let mut voxels = vec![0u8; geometry.voxel_count()];
    for s in spheres {
        let r = radius(s);
        let r2 = r * r;
        let lo = |a: usize| (s.center[a] - r).floor().max(0.0) as usize;
        let hi = |a: usize, n: usize| ((s.center[a] + r).ceil().max(0.0) as usize).min(n - 1);
        for z in lo(2)..=hi(2, nz) {
            for y in lo(1)..=hi(1, ny) {
                for x in lo(0)..=hi(0, nx) {
                    if dist2(x, y, z, &s.center) <= r2 {
                        voxels[geometry.index(x, y, z)] = s.organ.class_id();
                    }
                }
            }
        }
    }
    LabelVolume::new(geometry, voxels).expect("sphere labels are class ids")
}

/// Exhaustive per-voxel scan of the sphere geometry.
pub fn truth_scan(geometry: GridGeometry, spheres: &[SphereSpec], deltas: &[i32]) -> PhantomTruth {
    let [nx, ny, nz] = geometry.dims();
    let total = geometry.voxel_count();
    let r = deltas.len();
    let voxel_cm3 = geometry.voxel_volume_cm3();
    let classes = Organ::ALL
        .iter()
        .map(|&organ| {
            let Some(s) = spheres.iter().find(|s| s.organ == organ) else {
                return ClassTruth {
                    organ,
                    rater_volumes_cm3: vec![0.0; r],
                    mean_cm3: 0.0,
                    std_cm3: 0.0,
                    fg: 0,
                    bg: total,
                    dissensus: 0,
                };
            };
            let mut per_rater = vec![0usize; r];
            let (mut fg, mut bg, mut dissensus) = (0, 0, 0);
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        let d2 = dist2(x, y, z, &s.center);
                        let mut votes = 0;
                        for (k, &delta) in deltas.iter().enumerate() {
                            let rad = s.radius + f64::from(delta);
                            if d2 <= rad * rad {
                                votes += 1;
                                per_rater[k] += 1;
                            }
                        }
                        match votes {
                            0 => bg += 1,
                            v if v == r => fg += 1,
                            _ => dissensus += 1,
                        }
                    }
                }
            }
            let rater_volumes_cm3: Vec<f64> = per_rater.iter().map(|&c| c as f64 * voxel_cm3).collect();
            let mean_cm3 = crate::numeric::mean(&rater_volumes_cm3).unwrap_or(0.0);
            let std_cm3 = std_dev(&rater_volumes_cm3, SigmaConvention::Population);
            ClassTruth { organ, rater_volumes_cm3, mean_cm3, std_cm3, fg, bg, dissensus }
        })
        .collect();
    PhantomTruth { classes }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|v| v / sum).collect()
}

/// Separable convolution of one channel; taps falling outside the grid are dropped and the
/// remaining weights renormalized.
fn blur_channel(data: &mut [f64], dims: [usize; 3], kernel: &[f64]) {
    let radius = (kernel.len() / 2) as i64;
    let strides = [1, dims[0], dims[0] * dims[1]];
    let mut line = Vec::new();
    for axis in 0..3 {
        let n = dims[axis];
        let stride = strides[axis];
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        for j in 0..dims[others[1]] {
            for i in 0..dims[others[0]] {
                let base = i * strides[others[0]] + j * strides[others[1]];
                line.clear();
                line.extend((0..n).map(|k| data[base + k * stride]));
                for k in 0..n as i64 {
                    let (mut acc, mut wsum) = (0.0, 0.0);
                    for (t, w) in kernel.iter().enumerate() {
                        let src = k + t as i64 - radius;
                        if (0..n as i64).contains(&src) {
                            acc += w * line[src as usize];
                            wsum += w;
                        }
                    }
                    data[base + k as usize * stride] = acc / wsum;
                }
            }
        }
    }
}

fn normalize_voxels(data: &mut [f64], n: usize) {
    for i in 0..n {
        let sum: f64 = (0..CHANNELS).map(|c| data[c * n + i]).sum();
        for c in 0..CHANNELS {
            data[c * n + i] /= sum;
        }
    }
}

/// Raises (or lowers) each voxel's winning channel by `delta`, rescaling the others.
fn shift_winner(data: &mut [f64], n: usize, delta: f64) {
    for i in 0..n {
        let probs: [f64; CHANNELS] = std::array::from_fn(|c| data[c * n + i]);
        let winner = crate::metrics::argmax(&probs);
        let new_winner = (probs[winner] + delta).clamp(0.0, 1.0);
        let rest: f64 = 1.0 - probs[winner];
        let new_rest = 1.0 - new_winner;
        for c in 0..CHANNELS {
            data[c * n + i] = if c == winner {
                new_winner
            } else if rest > 0.0 {
                probs[c] * new_rest / rest
            } else {
                new_rest / (CHANNELS - 1) as f64
            };
        }
    }
}

/// How one prediction is rendered from the sphere layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionSpec {
    pub model: PredictionModel,
    pub radius_offset: f64,
    pub noise: f64,
}

pub fn render_prediction(
    geometry: GridGeometry,
    spheres: &[SphereSpec],
    deltas: &[i32],
    spec: &PredictionSpec,
    rng: &mut StreamRng,
) -> Result<ProbabilityVolume> {
    let PredictionSpec { model, radius_offset, noise } = *spec;
    validate_model(&model, noise)?;
    let min_delta = f64::from(deltas.iter().copied().min().unwrap_or(0));
    let unanimous = label_map(geometry, spheres, |s| s.radius + min_delta + radius_offset);
    let n = geometry.voxel_count();
    let mut data = vec![0f64; CHANNELS * n];
    for (i, &label) in unanimous.voxels().iter().enumerate() {
        data[usize::from(label) * n + i] = 1.0;
    }
    let blur = |data: &mut Vec<f64>, sigma: f64| {
        let kernel = gaussian_kernel(sigma);
        for c in 0..CHANNELS {
            blur_channel(&mut data[c * n..(c + 1) * n], geometry.dims(), &kernel);
        }
        normalize_voxels(data, n);
    };
    match model {
        PredictionModel::Perfect => {}
        PredictionModel::Blurred { sigma } => blur(&mut data, sigma),
        PredictionModel::Miscalibrated { delta, sigma } => {
            blur(&mut data, sigma);
            shift_winner(&mut data, n, delta);
        }
    }
    if noise > 0.0 {
        for v in data.iter_mut() {
            *v += noise * rng.unit();
        }
        normalize_voxels(&mut data, n);
    }
    let data: Vec<f32> = data.into_iter().map(|v| v as f32).collect();
    ProbabilityVolume::new(geometry, ProbData::F32(data), SumPolicy::Strict)
}

/// One prediction source in a phantom dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub name: String,
    pub prediction: PredictionModel,
    #[serde(default)]
    pub radius_offset: f64,
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeFormat {
    /// Gzip-compressed NIfTI-1.
    #[default]
    Nifti,
    /// JSON header + raw payload.
    Desk,
}

impl VolumeFormat {
    fn extension(self) -> &'static str {
        match self {
            VolumeFormat::Nifti => "nii.gz",
            VolumeFormat::Desk => "json",
        }
    }
}

/// A whole evaluable dataset: several cases sharing sphere layout, each rigidly
/// shifted by a seeded random offset of at most `jitter` voxels per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomDatasetSpec {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub spheres: Vec<SphereSpec>,
    pub rater_deltas: Vec<i32>,
    pub cases: usize,
    /// Groups assigned to cases in rotation; defaults to `[A, B, C]`.
    #[serde(default)]
    pub groups: Vec<Group>,
    #[serde(default)]
    pub jitter: u32,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub format: VolumeFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTruth {
    pub case_id: String,
    pub group: Group,
    pub offset: [i64; 3],
    pub truth: PhantomTruth,
}

impl PhantomDatasetSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("{}: phantom spec: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        GridGeometry::new(self.dims, self.spacing_mm)?;
        let range = delta_range(&self.rater_deltas, self.algorithms.iter().map(|a| a.radius_offset))?;
        validate_spheres(self.dims, &self.spheres, range, f64::from(self.jitter))?;
        if self.cases == 0 {
            return Err(Error::validation("phantom dataset needs at least one case"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::validation("phantom dataset needs at least one algorithm"));
        }
        for (k, a) in self.algorithms.iter().enumerate() {
            if a.name.is_empty() || a.name.contains(['/', '\\']) {
                return Err(Error::validation(format!("invalid algorithm name '{}'", a.name)));
            }
            if self.algorithms[..k].iter().any(|o| o.name == a.name) {
                return Err(Error::validation(format!("algorithm '{}' listed twice", a.name)));
            }
            validate_model(&a.prediction, a.noise)?;
        }
        Ok(())
    }

    fn case_spheres(&self, case: usize) -> ([i64; 3], Vec<SphereSpec>) {
        let mut rng = StreamRng::new(self.seed, case as u64);
        let j = i64::from(self.jitter);
        let offset: [i64; 3] =
            std::array::from_fn(|_| if j == 0 { 0 } else { rng.below((2 * j + 1) as u64) as i64 - j });
        let spheres = self
            .spheres
            .iter()
            .map(|s| SphereSpec {
                center: std::array::from_fn(|a| s.center[a] + offset[a] as f64),
                ..*s
            })
            .collect();
        (offset, spheres)
    }

    /// Writes volumes, `manifest.json` and `phantom_truth.json` into `out_dir`.
    pub fn write(&self, out_dir: impl AsRef<Path>) -> Result<ManifestDocument> {
        self.validate()?;
        let out = out_dir.as_ref();
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let geometry = GridGeometry::new(self.dims, self.spacing_mm)?;
        let groups = if self.groups.is_empty() { Group::ALL.to_vec() } else { self.groups.clone() };
        let ext = self.format.extension();
        let mut cases = Vec::with_capacity(self.cases);
        let mut truths = Vec::with_capacity(self.cases);
        for case in 0..self.cases {
            let case_id = format!("case_{:03}", case + 1);
            let group = groups[case % groups.len()];
            let dir = out.join(&case_id);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let (offset, spheres) = self.case_spheres(case);
            let raters = render_raters(geometry, &spheres, &self.rater_deltas);
            let mut rater_paths = Vec::with_capacity(raters.len());
            for (k, rater) in raters.into_iter().enumerate() {
                let rel = format!("{case_id}/rater_{}.{ext}", k + 1);
                write_volume(&Volume::Labels(rater), out.join(&rel))?;
                rater_paths.push(rel);
            }
            let mut predictions = std::collections::BTreeMap::new();
            for (a, algo) in self.algorithms.iter().enumerate() {
                let stream = ((case as u64) << 32) | (a as u64 + 1);
                let mut rng = StreamRng::new(self.seed, stream);
                let spec = PredictionSpec { model: algo.prediction, radius_offset: algo.radius_offset, noise: algo.noise };
                let pred = render_prediction(geometry, &spheres, &self.rater_deltas, &spec, &mut rng)
                    .with_context(|| format!("algorithm '{}'", algo.name))?;
                let rel = format!("{case_id}/{}.{ext}", algo.name);
                write_volume(&Volume::Probabilities(pred), out.join(&rel))?;
                predictions.insert(algo.name.clone(), rel);
            }
            truths.push(CaseTruth {
                case_id: case_id.clone(),
                group,
                offset,
                truth: truth_scan(geometry, &spheres, &self.rater_deltas),
            });
            cases.push(CaseDocument {
                case_id,
                group: group.as_str().to_string(),
                rater_annotations: rater_paths,
                algorithm_predictions: predictions,
            });
        }
        let doc = ManifestDocument { cases };
        crate::manifest::write_manifest(&doc, out.join("manifest.json"))?;
        let truth_path = out.join("phantom_truth.json");
        let json = serde_json::to_string_pretty(&truths).expect("truth serializes");
        fs::write(&truth_path, json + "\n").map_err(|e| Error::io(&truth_path, e))?;
        Ok(doc)
    }
}
