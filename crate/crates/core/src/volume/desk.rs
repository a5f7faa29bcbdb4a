//! "Desk" volume format: a small JSON header next to a little-endian raw payload.
//!
//! `case.json` holds `{ "dims": [x, y, z], "spacing_mm": [sx, sy, sz],
//! "dtype": "uint8" | "int16" | "float32" | "float64", "channels": 1 | 4 }`
//! and `case.raw` the x-fastest, channel-major payload.

use std::fs;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use super::nifti::NiftiDtype;
use super::{
    GridGeometry, LabelVolume, ProbData, ProbabilityVolume, ReadOptions, Volume, CHANNELS,
};
use crate::error::{Error, Result, ResultExt};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DeskHeader {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    dtype: String,
    channels: usize,
}

fn raw_path(json: &Path) -> PathBuf {
    json.with_extension("raw")
}

pub fn read_desk(path: impl AsRef<Path>, options: ReadOptions) -> Result<Volume> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: DeskHeader = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("desk header: {e}")))
        .with_context(|| path.display().to_string())?;
    let raw = raw_path(path);
    let payload = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    decode(&header, &payload, options).with_context(|| path.display().to_string())
}

fn decode(header: &DeskHeader, payload: &[u8], options: ReadOptions) -> Result<Volume> {
    let geometry = GridGeometry::new(header.dims, header.spacing_mm)?;
    let dtype = NiftiDtype::from_name(&header.dtype)?;
    let count = geometry.voxel_count() * header.channels;
    if payload.len() != count * dtype.size() {
        return Err(Error::format(format!(
            "raw payload has {} bytes, expected {}",
            payload.len(),
            count * dtype.size()
        )));
    }
    match header.channels {
        1 => {
            let values: Vec<f64> = match dtype {
                NiftiDtype::Uint8 => {
                    return LabelVolume::new(geometry, payload.to_vec()).map(Volume::Labels)
                }
                NiftiDtype::Int16 => {
                    payload.chunks_exact(2).map(|c| f64::from(LittleEndian::read_i16(c))).collect()
                }
                NiftiDtype::Float32 => {
                    payload.chunks_exact(4).map(|c| f64::from(LittleEndian::read_f32(c))).collect()
                }
                NiftiDtype::Float64 => payload.chunks_exact(8).map(LittleEndian::read_f64).collect(),
            };
            let voxels = values
                .iter()
                .map(|&v| {
                    if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
                        Ok(v as u8)
                    } else {
                        Err(Error::validation(format!("label value {v} is not a class id")))
                    }
                })
                .collect::<Result<Vec<u8>>>()?;
            LabelVolume::new(geometry, voxels).map(Volume::Labels)
        }
        CHANNELS => {
            let data = match dtype {
                NiftiDtype::Float32 => {
                    let mut v = vec![0f32; count];
                    LittleEndian::read_f32_into(payload, &mut v);
                    ProbData::F32(v)
                }
                NiftiDtype::Float64 => {
                    let mut v = vec![0f64; count];
                    LittleEndian::read_f64_into(payload, &mut v);
                    ProbData::F64(v)
                }
                other => {
                    return Err(Error::format(format!(
                        "probability maps must be float32 or float64, got {}",
                        other.name()
                    )))
                }
            };
            ProbabilityVolume::new(geometry, data, options.sum_policy).map(Volume::Probabilities)
        }
        n => Err(Error::shape(format!("desk volume must have 1 or {CHANNELS} channels, got {n}"))),
    }
}

/// Writes `path` (JSON header) and its sibling `.raw` payload.
pub fn write_desk(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let geometry = volume.geometry();
    let (dtype, channels, payload) = match volume {
        Volume::Labels(v) => ("uint8", 1, v.voxels().to_vec()),
        Volume::Probabilities(p) => match p.data() {
            ProbData::F32(v) => {
                let mut buf = vec![0u8; v.len() * 4];
                LittleEndian::write_f32_into(v, &mut buf);
                ("float32", CHANNELS, buf)
            }
            ProbData::F64(v) => {
                let mut buf = vec![0u8; v.len() * 8];
                LittleEndian::write_f64_into(v, &mut buf);
                ("float64", CHANNELS, buf)
            }
        },
    };
    let header = DeskHeader {
        dims: geometry.dims(),
        spacing_mm: geometry.spacing(),
        dtype: dtype.to_string(),
        channels,
    };
    let json = serde_json::to_string_pretty(&header).expect("desk header serializes");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))?;
    let raw = raw_path(path);
    fs::write(&raw, payload).map_err(|e| Error::io(&raw, e))
}
