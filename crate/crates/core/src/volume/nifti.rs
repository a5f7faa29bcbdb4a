//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) reader and writer.
//!
//! Only the fields needed to recover a voxel grid are honoured: `sizeof_hdr`
//! (also the byte-order probe), `dim`, `datatype`, `bitpix`, `pixdim[1..=3]`,
//! `vox_offset`, `scl_slope`, `scl_inter` and `magic`. Orientation fields are
//! ignored; volumes are compared grid to grid.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{
    GridGeometry, LabelVolume, Precision, ProbData, ProbabilityVolume, ReadOptions, Volume,
    CHANNELS,
};
use crate::error::{Error, Result, ResultExt};

const HEADER_SIZE: usize = 348;
const DEFAULT_VOX_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";
const GZIP_MAGIC: [u8; 2] = [0x1F, 0x8B];

mod offset {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const MAGIC: usize = 344;
}

/// Supported NIfTI datatype codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDtype {
    Uint8,
    Int16,
    Float32,
    Float64,
}

impl NiftiDtype {
    pub fn code(self) -> i16 {
        match self {
            NiftiDtype::Uint8 => 2,
            NiftiDtype::Int16 => 4,
            NiftiDtype::Float32 => 16,
            NiftiDtype::Float64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(NiftiDtype::Uint8),
            4 => Ok(NiftiDtype::Int16),
            16 => Ok(NiftiDtype::Float32),
            64 => Ok(NiftiDtype::Float64),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            NiftiDtype::Uint8 => 1,
            NiftiDtype::Int16 => 2,
            NiftiDtype::Float32 => 4,
            NiftiDtype::Float64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NiftiDtype::Uint8 => "uint8",
            NiftiDtype::Int16 => "int16",
            NiftiDtype::Float32 => "float32",
            NiftiDtype::Float64 => "float64",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "uint8" => Ok(NiftiDtype::Uint8),
            "int16" => Ok(NiftiDtype::Int16),
            "float32" => Ok(NiftiDtype::Float32),
            "float64" => Ok(NiftiDtype::Float64),
            other => Err(Error::format(format!("unsupported dtype '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrderKind {
    Little,
    Big,
}

/// The subset of a NIfTI-1 header this crate reads.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub byte_order: ByteOrderKind,
    pub dim: [i16; 8],
    pub datatype: NiftiDtype,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
}

impl NiftiHeader {
    fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::format(format!(
                "file too short for a NIfTI-1 header ({} bytes)",
                bytes.len()
            )));
        }
        let byte_order = if LittleEndian::read_i32(&bytes[offset::SIZEOF_HDR..]) == 348 {
            ByteOrderKind::Little
        } else if BigEndian::read_i32(&bytes[offset::SIZEOF_HDR..]) == 348 {
            ByteOrderKind::Big
        } else {
            return Err(Error::format("sizeof_hdr is not 348 in either byte order"));
        };
        if &bytes[offset::MAGIC..offset::MAGIC + 4] != MAGIC {
            return Err(Error::format(format!(
                "bad magic {:?}, expected single-file NIfTI-1 \"n+1\\0\"",
                &bytes[offset::MAGIC..offset::MAGIC + 4]
            )));
        }
        match byte_order {
            ByteOrderKind::Little => Self::parse_fields::<LittleEndian>(bytes, byte_order),
            ByteOrderKind::Big => Self::parse_fields::<BigEndian>(bytes, byte_order),
        }
    }

    fn parse_fields<B: ByteOrder>(bytes: &[u8], byte_order: ByteOrderKind) -> Result<Self> {
        let mut dim = [0i16; 8];
        B::read_i16_into(&bytes[offset::DIM..offset::DIM + 16], &mut dim);
        let datatype = NiftiDtype::from_code(B::read_i16(&bytes[offset::DATATYPE..]))?;
        let bitpix = B::read_i16(&bytes[offset::BITPIX..]);
        if bitpix as usize != datatype.size() * 8 {
            return Err(Error::format(format!(
                "bitpix {bitpix} inconsistent with datatype {}",
                datatype.name()
            )));
        }
        let mut pixdim = [0f32; 8];
        B::read_f32_into(&bytes[offset::PIXDIM..offset::PIXDIM + 32], &mut pixdim);
        Ok(Self {
            byte_order,
            dim,
            datatype,
            bitpix,
            pixdim,
            vox_offset: B::read_f32(&bytes[offset::VOX_OFFSET..]),
            scl_slope: B::read_f32(&bytes[offset::SCL_SLOPE..]),
            scl_inter: B::read_f32(&bytes[offset::SCL_INTER..]),
        })
    }

    /// Number of spatial+channel dimensions declared in `dim[0]`.
    pub fn rank(&self) -> i16 {
        self.dim[0]
    }

    pub fn geometry(&self) -> Result<GridGeometry> {
        let rank = self.dim[0];
        if !(1..=7).contains(&rank) {
            return Err(Error::format(format!("dim[0] = {rank} is out of range")));
        }
        let mut dims = [1usize; 3];
        for (axis, d) in dims.iter_mut().enumerate() {
            if axis < rank as usize {
                let v = self.dim[axis + 1];
                if v < 1 {
                    return Err(Error::format(format!("dim[{}] = {v} must be >= 1", axis + 1)));
                }
                *d = v as usize;
            }
        }
        let spacing = std::array::from_fn(|axis| {
            if axis < rank as usize { f64::from(self.pixdim[axis + 1]).abs() } else { 1.0 }
        });
        GridGeometry::new(dims, spacing)
    }

    /// Number of channels along the fourth axis (1 for 3D files).
    pub fn channels(&self) -> usize {
        if self.dim[0] >= 4 { self.dim[4].max(1) as usize } else { 1 }
    }

    fn scaling(&self) -> Option<(f64, f64)> {
        let slope = f64::from(self.scl_slope);
        let inter = f64::from(self.scl_inter);
        if slope == 0.0 || !slope.is_finite() || (slope == 1.0 && inter == 0.0) {
            None
        } else {
            Some((slope, inter))
        }
    }
}

fn open_bytes(path: &Path, limit: Option<usize>) -> Result<Vec<u8>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    file.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&GZIP_MAGIC) {
        let decoder = GzDecoder::new(raw.as_slice());
        let mut out = Vec::new();
        let res = match limit {
            Some(n) => decoder.take(n as u64).read_to_end(&mut out),
            None => GzDecoder::new(raw.as_slice()).read_to_end(&mut out),
        };
        res.map_err(|e| Error::format(format!("gzip stream: {e}")))
            .with_context(|| path.display().to_string())?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Reads and parses only the header of a NIfTI file.
pub fn read_header(path: impl AsRef<Path>) -> Result<NiftiHeader> {
    let path = path.as_ref();
    let bytes = open_bytes(path, Some(HEADER_SIZE))?;
    NiftiHeader::parse(&bytes).with_context(|| path.display().to_string())
}

/// Reads a label volume (3D) or probability map (4D, four channels).
pub fn read_nifti(path: impl AsRef<Path>, options: ReadOptions) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = open_bytes(path, None)?;
    decode(&bytes, options).with_context(|| path.display().to_string())
}

pub fn read_label_nifti(path: impl AsRef<Path>) -> Result<LabelVolume> {
    match read_nifti(path.as_ref(), ReadOptions::default())? {
        Volume::Labels(v) => Ok(v),
        Volume::Probabilities(_) => Err(Error::shape(format!(
            "{}: 4D file where a 3D label volume was expected",
            path.as_ref().display()
        ))),
    }
}

pub fn read_probability_nifti(
    path: impl AsRef<Path>,
    options: ReadOptions,
) -> Result<ProbabilityVolume> {
    match read_nifti(path.as_ref(), options)? {
        Volume::Probabilities(v) => Ok(v),
        Volume::Labels(_) => Err(Error::shape(format!(
            "{}: 3D file where a 4D probability map was expected",
            path.as_ref().display()
        ))),
    }
}

/// Decodes an in-memory (already decompressed) NIfTI-1 file.
pub(crate) fn decode(bytes: &[u8], options: ReadOptions) -> Result<Volume> {
    let header = NiftiHeader::parse(bytes)?;
    let geometry = header.geometry()?;
    let rank = header.rank();
    if rank > 4 {
        return Err(Error::shape(format!("{rank}D volumes are not supported")));
    }
    let channels = header.channels();
    if rank == 4 && channels != CHANNELS {
        return Err(Error::shape(format!(
            "4D probability map must have {CHANNELS} channels, found {channels}"
        )));
    }
    let count = geometry.voxel_count() * channels;
    let start = header.vox_offset as usize;
    if header.vox_offset < HEADER_SIZE as f32 || header.vox_offset.fract() != 0.0 {
        return Err(Error::format(format!("invalid vox_offset {}", header.vox_offset)));
    }
    let end = start + count * header.datatype.size();
    if bytes.len() < end {
        return Err(Error::format(format!(
            "payload truncated: need {} bytes after offset {start}, have {}",
            end - start,
            bytes.len().saturating_sub(start)
        )));
    }
    let payload = &bytes[start..end];
    match header.byte_order {
        ByteOrderKind::Little => decode_payload::<LittleEndian>(&header, geometry, payload, options),
        ByteOrderKind::Big => decode_payload::<BigEndian>(&header, geometry, payload, options),
    }
}

fn decode_payload<B: ByteOrder>(
    header: &NiftiHeader,
    geometry: GridGeometry,
    payload: &[u8],
    options: ReadOptions,
) -> Result<Volume> {
    let scaling = header.scaling();
    if header.rank() == 4 {
        let data = match (header.datatype, scaling) {
            (NiftiDtype::Float32, None) => {
                let mut v = vec![0f32; payload.len() / 4];
                B::read_f32_into(payload, &mut v);
                ProbData::F32(v)
            }
            (NiftiDtype::Float64, None) => {
                let mut v = vec![0f64; payload.len() / 8];
                B::read_f64_into(payload, &mut v);
                ProbData::F64(v)
            }
            _ => ProbData::F64(scaled_values::<B>(header.datatype, payload, scaling)),
        };
        return ProbabilityVolume::new(geometry, data, options.sum_policy).map(Volume::Probabilities);
    }

    let voxels = if header.datatype == NiftiDtype::Uint8 && scaling.is_none() {
        payload.to_vec()
    } else {
        scaled_values::<B>(header.datatype, payload, scaling)
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
                    Ok(v as u8)
                } else {
                    Err(Error::validation(format!(
                        "label value {v} at voxel {:?} is not a class id",
                        geometry.coords(i)
                    )))
                }
            })
            .collect::<Result<Vec<u8>>>()?
    };
    LabelVolume::new(geometry, voxels).map(Volume::Labels)
}

fn scaled_values<B: ByteOrder>(
    dtype: NiftiDtype,
    payload: &[u8],
    scaling: Option<(f64, f64)>,
) -> Vec<f64> {
    let raw: Vec<f64> = match dtype {
        NiftiDtype::Uint8 => payload.iter().map(|&b| f64::from(b)).collect(),
        NiftiDtype::Int16 => payload.chunks_exact(2).map(|c| f64::from(B::read_i16(c))).collect(),
        NiftiDtype::Float32 => payload.chunks_exact(4).map(|c| f64::from(B::read_f32(c))).collect(),
        NiftiDtype::Float64 => payload.chunks_exact(8).map(B::read_f64).collect(),
    };
    match scaling {
        Some((slope, inter)) => raw.into_iter().map(|v| v * slope + inter).collect(),
        None => raw,
    }
}

fn encode_header(geometry: &GridGeometry, channels: usize, dtype: NiftiDtype) -> Vec<u8> {
    let mut h = vec![0u8; DEFAULT_VOX_OFFSET];
    LittleEndian::write_i32(&mut h[offset::SIZEOF_HDR..], HEADER_SIZE as i32);
    let [nx, ny, nz] = geometry.dims();
    let mut dim = [1i16; 8];
    dim[0] = if channels > 1 { 4 } else { 3 };
    dim[1] = nx as i16;
    dim[2] = ny as i16;
    dim[3] = nz as i16;
    dim[4] = channels as i16;
    LittleEndian::write_i16_into(&dim, &mut h[offset::DIM..offset::DIM + 16]);
    LittleEndian::write_i16(&mut h[offset::DATATYPE..], dtype.code());
    LittleEndian::write_i16(&mut h[offset::BITPIX..], (dtype.size() * 8) as i16);
    let [sx, sy, sz] = geometry.spacing();
    let pixdim = [1.0, sx as f32, sy as f32, sz as f32, 1.0, 1.0, 1.0, 1.0];
    LittleEndian::write_f32_into(&pixdim, &mut h[offset::PIXDIM..offset::PIXDIM + 32]);
    LittleEndian::write_f32(&mut h[offset::VOX_OFFSET..], DEFAULT_VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut h[offset::SCL_SLOPE..], 0.0);
    LittleEndian::write_f32(&mut h[offset::SCL_INTER..], 0.0);
    // NIFTI_UNITS_MM
    h[offset::XYZT_UNITS] = 2;
    h[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(MAGIC);
    h
}

fn check_dims(geometry: &GridGeometry) -> Result<()> {
    if geometry.dims().iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::shape(format!(
            "grid {:?} exceeds the NIfTI-1 per-axis limit of {}",
            geometry.dims(),
            i16::MAX
        )));
    }
    Ok(())
}

pub(crate) fn encode_labels(volume: &LabelVolume, dtype: NiftiDtype) -> Result<Vec<u8>> {
    check_dims(volume.geometry())?;
    let mut out = encode_header(volume.geometry(), 1, dtype);
    let voxels = volume.voxels();
    match dtype {
        NiftiDtype::Uint8 => out.extend_from_slice(voxels),
        NiftiDtype::Int16 => {
            let vals: Vec<i16> = voxels.iter().map(|&v| i16::from(v)).collect();
            let mut buf = vec![0u8; vals.len() * 2];
            LittleEndian::write_i16_into(&vals, &mut buf);
            out.extend_from_slice(&buf);
        }
        NiftiDtype::Float32 => {
            let vals: Vec<f32> = voxels.iter().map(|&v| f32::from(v)).collect();
            let mut buf = vec![0u8; vals.len() * 4];
            LittleEndian::write_f32_into(&vals, &mut buf);
            out.extend_from_slice(&buf);
        }
        NiftiDtype::Float64 => {
            let vals: Vec<f64> = voxels.iter().map(|&v| f64::from(v)).collect();
            let mut buf = vec![0u8; vals.len() * 8];
            LittleEndian::write_f64_into(&vals, &mut buf);
            out.extend_from_slice(&buf);
        }
    }
    Ok(out)
}

pub(crate) fn encode_probabilities(volume: &ProbabilityVolume) -> Result<Vec<u8>> {
    check_dims(volume.geometry())?;
    let dtype = match volume.precision() {
        Precision::F32 => NiftiDtype::Float32,
        Precision::F64 => NiftiDtype::Float64,
    };
    let mut out = encode_header(volume.geometry(), CHANNELS, dtype);
    match volume.data() {
        ProbData::F32(v) => {
            let mut buf = vec![0u8; v.len() * 4];
            LittleEndian::write_f32_into(v, &mut buf);
            out.extend_from_slice(&buf);
        }
        ProbData::F64(v) => {
            let mut buf = vec![0u8; v.len() * 8];
            LittleEndian::write_f64_into(v, &mut buf);
            out.extend_from_slice(&buf);
        }
    }
    Ok(out)
}

fn write_bytes(bytes: &[u8], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let gz = path.to_string_lossy().to_ascii_lowercase().ends_with(".gz");
    let res = if gz {
        // fixed level, empty gzip header
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::new(6));
        enc.write_all(bytes).and_then(|_| enc.finish()).and_then(|mut w| w.flush())
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(bytes).and_then(|_| w.flush())
    };
    res.map_err(|e| Error::io(path, e))
}

/// Writes a volume as little-endian NIfTI-1; gzip-compressed when the path ends in `.gz`.
///
/// Labels are written as uint8, probability maps in their storage precision.
pub fn write_nifti(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let bytes = match volume {
        Volume::Labels(v) => encode_labels(v, NiftiDtype::Uint8)?,
        Volume::Probabilities(v) => encode_probabilities(v)?,
    };
    write_bytes(&bytes, path.as_ref())
}

/// Writes a label volume with an explicit on-disk datatype.
pub fn write_label_nifti_as(
    volume: &LabelVolume,
    dtype: NiftiDtype,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_bytes(&encode_labels(volume, dtype)?, path.as_ref())
}
