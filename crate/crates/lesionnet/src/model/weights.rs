//! Binary weight checkpoints.
//!
//! Layout (all integers little-endian):
//! magic `LNWT`, version `u16`, count `u32`, then per tensor:
//! name length `u16` + UTF-8 name, rank `u8`, extents `u32` each, and the
//! row-major payload as little-endian `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{Element, Tensor};

const MAGIC: &[u8; 4] = b"LNWT";
const VERSION: u16 = 1;

/// Write every named tensor of the model (weights and running statistics).
/// Values are stored as `f32`; for `f32` models the round trip is bit-exact.
pub fn save_weights<T: Element>(model: &Model<T>, path: &Path) -> Result<()> {
    let state = model.state();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(state.len() as u32)?;
    for (name, tensor) in &state {
        if name.len() > u16::MAX as usize {
            return Err(Error::format(format!("parameter name too long: {name}")));
        }
        w.write_u16::<LittleEndian>(name.len() as u16)?;
        w.write_all(name.as_bytes())?;
        w.write_u8(tensor.rank() as u8)?;
        for &e in tensor.dims() {
            w.write_u32::<LittleEndian>(e as u32)?;
        }
        for &v in tensor.data() {
            w.write_f32::<LittleEndian>(v.as_f64() as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint into a model built with the same configuration. Name or
/// shape disagreements are rejected naming the first divergent parameter.
pub fn load_weights<T: Element>(model: &mut Model<T>, path: &Path) -> Result<()> {
    let entries = read_entries::<T>(path)?;
    model.load_state(&entries)
}

fn read_entries<T: Element>(path: &Path) -> Result<Vec<(String, Tensor<T>)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        let mut reversed = magic;
        reversed.reverse();
        if &reversed == MAGIC {
            return Err(Error::format(
                "weight file written with flipped endianness marker is unsupported",
            ));
        }
        return Err(Error::format(format!(
            "bad weight file magic {:?}, expected \"LNWT\"",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = r
        .read_u16::<LittleEndian>()
        .map_err(|_| truncated("version"))?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported weight format version {version}"
        )));
    }
    let count = r.read_u32::<LittleEndian>().map_err(|_| truncated("count"))?;
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = r
            .read_u16::<LittleEndian>()
            .map_err(|_| truncated("name length"))?;
        let mut name_bytes = vec![0u8; name_len as usize];
        read_exact(&mut r, &mut name_bytes, "name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::format("parameter name is not valid UTF-8"))?;
        let rank = r.read_u8().map_err(|_| truncated("rank"))?;
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            dims.push(
                r.read_u32::<LittleEndian>()
                    .map_err(|_| truncated("extent"))? as usize,
            );
        }
        let numel: usize = dims.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(T::from_f64(
                r.read_f32::<LittleEndian>()
                    .map_err(|_| truncated(&format!("payload of {name}")))? as f64,
            ));
        }
        entries.push((name, Tensor::from_vec(dims, data)?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format("trailing bytes after last weight entry"));
    }
    Ok(entries)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| truncated(what))
}

fn truncated(what: &str) -> Error {
    Error::format(format!("truncated weight file while reading {what}"))
}
