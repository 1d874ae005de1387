//! Binary model checkpoint.
//!
//! Layout (little-endian): 8-byte magic, `u32` version, `u32` F, `u32` H
//! (0 = no hidden layer), `u32` K, `u64` seed, then every parameter as `f64`
//! in layer order.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::model::FrameScorer;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"AVTMIL\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(model: &FrameScorer, mut out: W) -> std::io::Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    out.write_u32::<LittleEndian>(model.input_dim() as u32)?;
    out.write_u32::<LittleEndian>(model.hidden_dim() as u32)?;
    out.write_u32::<LittleEndian>(model.n_events() as u32)?;
    out.write_u64::<LittleEndian>(model.seed())?;
    for &p in model.params() {
        out.write_f64::<LittleEndian>(p)?;
    }
    out.flush()
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<FrameScorer> {
    let corrupt = |e: std::io::Error| Error::InvalidValue(format!("truncated checkpoint: {e}"));
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(corrupt)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::InvalidValue(
            "not a model checkpoint (bad magic)".into(),
        ));
    }
    let version = input.read_u32::<LittleEndian>().map_err(corrupt)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::InvalidValue(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let f = input.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
    let h = input.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
    let k = input.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
    let seed = input.read_u64::<LittleEndian>().map_err(corrupt)?;
    let n = FrameScorer::param_count(f, h, k);
    let mut params = vec![0.0; n];
    input
        .read_f64_into::<LittleEndian>(&mut params)
        .map_err(corrupt)?;
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(corrupt)? != 0 {
        return Err(Error::InvalidValue(
            "trailing bytes after checkpoint".into(),
        ));
    }
    FrameScorer::from_params(f, h, k, seed, params)
}

pub fn save_checkpoint(model: &FrameScorer, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<FrameScorer> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}
