//! The MVOL volume container: one rank-3 voxel grid per file, named
//! `<case_id>_<modality>.mvol`.
//!
//! Layout (integers little-endian): magic `MVOL`, version `u16` = 1, rank
//! `u16` = 3, extents `u32` x 3 (depth, height, width), dtype `u8` = 1
//! (32-bit float), reserved `u8` x 3, then the row-major payload as
//! little-endian `f32`.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"MVOL";
const VERSION: u16 = 1;
const DTYPE_F32: u8 = 1;

/// The four mpMRI scan types acquired per case.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash)]
pub enum Modality {
    Flair,
    T1w,
    T1Gd,
    T2,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Flair, Modality::T1w, Modality::T1Gd, Modality::T2];

    /// Lower-case file-name suffix.
    pub fn suffix(&self) -> &'static str {
        match self {
            Modality::Flair => "flair",
            Modality::T1w => "t1w",
            Modality::T1Gd => "t1gd",
            Modality::T2 => "t2",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Modality::Flair => "FLAIR",
            Modality::T1w => "T1w",
            Modality::T1Gd => "T1Gd",
            Modality::T2 => "T2",
        };
        write!(f, "{name}")
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "flair" => Ok(Modality::Flair),
            "t1w" => Ok(Modality::T1w),
            "t1gd" => Ok(Modality::T1Gd),
            "t2" => Ok(Modality::T2),
            other => Err(Error::invalid(format!(
                "unknown modality {other:?} (expected flair, t1w, t1gd, or t2)"
            ))),
        }
    }
}

/// One case's voxel data for one modality, plus its label when known.
#[derive(Clone, Debug)]
pub struct VolumeRecord {
    pub case_id: String,
    pub modality: Modality,
    /// Rank-3 `[depth, height, width]` grid.
    pub voxels: Tensor<f32>,
    pub label: Option<u8>,
}

impl VolumeRecord {
    pub fn new(
        case_id: impl Into<String>,
        modality: Modality,
        voxels: Tensor<f32>,
        label: Option<u8>,
    ) -> Result<Self> {
        if voxels.rank() != 3 {
            return Err(Error::shape(format!(
                "volume must be rank 3 [depth, H, W], got {}",
                voxels.shape()
            )));
        }
        if let Some(l) = label {
            if l > 1 {
                return Err(Error::data(format!("label must be 0 or 1, got {l}")));
            }
        }
        Ok(VolumeRecord {
            case_id: case_id.into(),
            modality,
            voxels,
            label,
        })
    }

    /// Conventional file name for this record.
    pub fn file_name(&self) -> String {
        format!("{}_{}.mvol", self.case_id, self.modality.suffix())
    }
}

pub fn save_volume(rec: &VolumeRecord, path: &Path) -> Result<()> {
    if rec.voxels.rank() != 3 {
        return Err(Error::shape(format!(
            "volume must be rank 3 [depth, H, W], got {}",
            rec.voxels.shape()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u16::<LittleEndian>(3)?;
    for &e in rec.voxels.dims() {
        w.write_u32::<LittleEndian>(e as u32)?;
    }
    w.write_u8(DTYPE_F32)?;
    w.write_all(&[0u8; 3])?;
    for &v in rec.voxels.data() {
        w.write_f32::<LittleEndian>(v)?;
    }
    w.flush()?;
    Ok(())
}

/// Load a volume; case id and modality come from the
/// `<case_id>_<modality>.mvol` file name and the label is left unset.
pub fn load_volume(path: &Path) -> Result<VolumeRecord> {
    let (case_id, modality) = parse_volume_name(path)?;
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
    if &magic != MAGIC {
        return Err(Error::format(format!(
            "bad volume magic {:?}, expected \"MVOL\"",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = r
        .read_u16::<LittleEndian>()
        .map_err(|_| truncated("version"))?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported volume format version {version}"
        )));
    }
    let rank = r.read_u16::<LittleEndian>().map_err(|_| truncated("rank"))?;
    if rank != 3 {
        return Err(Error::format(format!("volume rank must be 3, got {rank}")));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = r
            .read_u32::<LittleEndian>()
            .map_err(|_| truncated("extents"))? as usize;
    }
    let dtype = r.read_u8().map_err(|_| truncated("dtype"))?;
    if dtype != DTYPE_F32 {
        return Err(Error::format(format!(
            "unsupported volume dtype {dtype}, expected 1 (32-bit float)"
        )));
    }
    let mut reserved = [0u8; 3];
    r.read_exact(&mut reserved).map_err(|_| truncated("reserved"))?;

    let numel: usize = dims.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        data.push(
            r.read_f32::<LittleEndian>()
                .map_err(|_| truncated("voxel payload"))?,
        );
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format(
            "volume payload longer than the declared extents",
        ));
    }
    VolumeRecord::new(case_id, modality, Tensor::from_vec(dims.to_vec(), data)?, None)
}

fn parse_volume_name(path: &Path) -> Result<(String, Modality)> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::format(format!("volume path {path:?} has no file name")))?;
    let (case_id, suffix) = stem.rsplit_once('_').ok_or_else(|| {
        Error::format(format!(
            "volume file name {stem:?} is not <case_id>_<modality>.mvol"
        ))
    })?;
    Ok((case_id.to_string(), suffix.parse()?))
}

fn truncated(what: &str) -> Error {
    Error::format(format!("truncated volume file while reading {what}"))
}
