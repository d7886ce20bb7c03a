//! Checkpoint format.
//!
//! Layout: magic bytes `RZSN`, format version as u32 little-endian, then one
//! record per tensor — name length (u16 LE), UTF-8 name, rank (u8), each
//! dimension as u32 LE, raw f32 LE values — and a trailing u64 LE step
//! counter. Records are read until exactly the trailing counter remains.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::autograd::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RZSN";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {found:?}: expected checkpoint magic RZSN")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

/// Serialize parameters and the optimizer step counter.
pub fn save_checkpoint(
    path: &Path,
    params: &BTreeMap<String, Tensor>,
    step: u64,
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for (name, tensor) in params {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(CheckpointError::Corrupt(format!(
                "tensor name `{name}` too long"
            )));
        }
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(tensor.rank() as u8);
        for &dim in tensor.shape() {
            buf.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf.extend_from_slice(&step.to_le_bytes());
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

/// Read a checkpoint back into a parameter map plus its step counter.
pub fn load_checkpoint(path: &Path) -> Result<(BTreeMap<String, Tensor>, u64)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 {
        return Err(CheckpointError::Corrupt(
            "file shorter than header plus step counter".into(),
        ));
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[..4]);
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic { found: magic });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }

    let mut params = BTreeMap::new();
    let mut pos = 8usize;
    let end = bytes.len() - 8;
    while pos < end {
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > end {
                return Err(CheckpointError::Corrupt(format!(
                    "record truncated at byte {pos}"
                )));
            }
            let slice = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(slice)
        };
        let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().expect("2 bytes")) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .map_err(|e| CheckpointError::Corrupt(format!("tensor name not UTF-8: {e}")))?;
        let rank = take(&mut pos, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().expect("4 bytes")) as usize);
        }
        let len: usize = shape.iter().product();
        let raw = take(&mut pos, len * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let tensor = Tensor::new(shape, data)
            .map_err(|e| CheckpointError::Corrupt(format!("tensor `{name}`: {e}")))?;
        params.insert(name, tensor);
    }
    let step = u64::from_le_bytes(bytes[end..].try_into().expect("8 bytes"));
    Ok((params, step))
}
