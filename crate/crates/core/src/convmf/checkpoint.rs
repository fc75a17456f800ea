//! `CMF1` checkpoint container.
//!
//! ```text
//! "CMF1"  u32 version  u32 m  u32 n  u32 rank  u32 tensor_count
//! tensor_count × { u16 name_len, name (ASCII), u8 ndim, ndim × u32 dims, f64 values }
//! UTF-8 TOML hyperparameters to end of file
//! ```
//!
//! All integers and floats little-endian.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::model::{build_convmf, ConvMfModel};
use super::{ConvMfError, Hyperparameters};

pub const CMF1_MAGIC: [u8; 4] = *b"CMF1";
pub const CMF1_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes {0:?}; not a CMF1 checkpoint")]
    BadMagic(Vec<u8>),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated at byte {offset} while reading {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("hyperparameter block: {0}")]
    Hyperparameters(String),
    #[error("header rank {header} conflicts with hyperparameter rank {hyper}")]
    RankMismatch { header: usize, hyper: usize },
    #[error("tensor layout does not match the declared architecture: {0}")]
    ArchitectureMismatch(String),
    #[error(transparent)]
    Model(#[from] ConvMfError),
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &ConvMfModel) -> Result<(), CheckpointError> {
    fs::write(path, encode(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ConvMfModel, CheckpointError> {
    decode(&fs::read(path)?)
}

fn u32_of(v: usize, what: &str) -> Result<u32, CheckpointError> {
    u32::try_from(v).map_err(|_| CheckpointError::ArchitectureMismatch(format!("{what} exceeds u32")))
}

pub(crate) fn encode(model: &ConvMfModel) -> Result<Vec<u8>, CheckpointError> {
    let names = model.tensor_names();
    let dims = model.tensor_dims();
    let values = model.tensor_values();
    let mut out = Vec::with_capacity(24 + 8 * model.num_parameters());
    out.extend_from_slice(&CMF1_MAGIC);
    for v in [
        CMF1_VERSION,
        u32_of(model.input_shape.0, "m")?,
        u32_of(model.input_shape.1, "n")?,
        u32_of(model.rank, "rank")?,
        u32_of(names.len(), "tensor count")?,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for ((name, d), vals) in names.iter().zip(&dims).zip(values) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(d.len() as u8);
        for &x in d {
            out.extend_from_slice(&u32_of(x, "dimension")?.to_le_bytes());
        }
        for v in vals.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let text = toml::to_string(&model.hyper).map_err(|e| CheckpointError::Hyperparameters(e.to_string()))?;
    out.extend_from_slice(text.as_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < len {
            return Err(CheckpointError::Truncated {
                offset: self.bytes.len(),
                what,
            });
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<ConvMfModel, CheckpointError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4.min(bytes.len()), "magic")?;
    if magic != CMF1_MAGIC {
        return Err(CheckpointError::BadMagic(magic.to_vec()));
    }
    let version = cur.u32("version")?;
    if version != CMF1_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let m = cur.u32("m")? as usize;
    let n = cur.u32("n")? as usize;
    let rank = cur.u32("rank")? as usize;
    let count = cur.u32("tensor count")? as usize;

    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = u16::from_le_bytes(cur.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(cur.take(name_len, "tensor name")?)
            .map_err(|_| CheckpointError::ArchitectureMismatch("tensor name is not ASCII".into()))?
            .to_string();
        let ndim = cur.take(1, "ndim")?[0] as usize;
        let dims = (0..ndim)
            .map(|_| cur.u32("dims").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let len = dims.iter().product::<usize>();
        let raw = cur.take(len.saturating_mul(8), "tensor values")?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, dims, values));
    }
    let text = std::str::from_utf8(&bytes[cur.pos..])
        .map_err(|e| CheckpointError::Hyperparameters(e.to_string()))?;
    let hyper: Hyperparameters = toml::from_str(text).map_err(|e| CheckpointError::Hyperparameters(e.to_string()))?;
    if hyper.rank != rank {
        return Err(CheckpointError::RankMismatch {
            header: rank,
            hyper: hyper.rank,
        });
    }

    let mut model = build_convmf(m, n, &hyper)?;
    let names = model.tensor_names();
    let dims = model.tensor_dims();
    if names.len() != tensors.len() {
        return Err(CheckpointError::ArchitectureMismatch(format!(
            "expected {} tensors, file has {}",
            names.len(),
            tensors.len()
        )));
    }
    for (i, (name, d, _)) in tensors.iter().enumerate() {
        if *name != names[i] || *d != dims[i] {
            return Err(CheckpointError::ArchitectureMismatch(format!(
                "tensor {i}: expected {} {:?}, file has {name} {d:?}",
                names[i], dims[i]
            )));
        }
    }
    for (slot, (_, _, values)) in model.tensor_values_mut().into_iter().zip(tensors) {
        *slot = values;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convmf::ConvSpec;
    use crate::linalg::Matrix;

    fn tiny() -> ConvMfModel {
        let h = Hyperparameters {
            conv_layers: vec![ConvSpec {
                kernel: 3,
                stride: 1,
                padding: 1,
                dilation: 1,
                out_channels: 2,
            }],
            stem_dims: vec![10],
            fork_dims: vec![7, 5],
            rank: 3,
            seed: 4,
            ..Hyperparameters::default()
        };
        build_convmf(6, 8, &h).unwrap()
    }

    #[test]
    fn round_trip_preserves_forward_bits() {
        let model = tiny();
        let back = decode(&encode(&model).unwrap()).unwrap();
        assert_eq!(back, model);
        let x = Matrix::from_fn(6, 8, |i, j| ((i * 8 + j) as f64).cos());
        let a = model.forward(&x).unwrap();
        let b = back.forward(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&tiny()).unwrap();
        assert_eq!(&bytes[..4], b"CMF1");
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        assert_eq!((word(0), word(1), word(2), word(3), word(4)), (1, 6, 8, 3, 16));
        assert_eq!(u16::from_le_bytes([bytes[24], bytes[25]]), 12);
        assert_eq!(&bytes[26..38], b"conv0.weight");
        assert_eq!(bytes[38], 4);
    }

    #[test]
    fn structured_errors() {
        let bytes = encode(&tiny()).unwrap();
        assert!(matches!(decode(&bytes[..100]), Err(CheckpointError::Truncated { .. })));
        assert!(matches!(decode(&bytes[..2]), Err(CheckpointError::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad), Err(CheckpointError::UnsupportedVersion(9))));
        let mut bad = bytes.clone();
        bad[16] = 4;
        assert!(matches!(
            decode(&bad),
            Err(CheckpointError::RankMismatch { header: 4, hyper: 3 })
        ));
        let mut bad = bytes.clone();
        bad[8] = 7;
        assert!(matches!(decode(&bad), Err(CheckpointError::ArchitectureMismatch(_))));
    }
}
