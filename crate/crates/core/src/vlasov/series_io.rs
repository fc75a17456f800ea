//! `VPTS` time-series container.
//!
//! Layout, little-endian, no padding:
//!
//! ```text
//! "VPTS"  u32 version=1  u32 nx  u32 nv  u32 frame_count
//! f64 dt_between_frames  f64 x_min  f64 x_max  f64 v_min  f64 v_max
//! frame_count × (nx·nv f64, row-major, row = spatial index)
//! frame_count × f64 field energy
//! ```
//!
//! The initial-condition name is not part of the container; readers get
//! `ic_name = ""`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{PhaseSpaceGrid, TimeSeries};
use crate::linalg::Matrix;

pub const VPTS_MAGIC: [u8; 4] = *b"VPTS";
pub const VPTS_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 5 * 8;

#[derive(Debug, Error)]
pub enum SeriesFormatError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes {0:?}; not a VPTS file")]
    BadMagic([u8; 4]),
    #[error("unsupported VPTS version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{0} trailing bytes after the last section")]
    TrailingBytes(u64),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("series is not writable: {0}")]
    InvalidSeries(String),
}

pub fn write_series(path: impl AsRef<Path>, series: &TimeSeries) -> Result<(), SeriesFormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    encode(&mut w, series)?;
    w.flush()?;
    Ok(())
}

pub fn read_series(path: impl AsRef<Path>) -> Result<TimeSeries, SeriesFormatError> {
    let file = File::open(path)?;
    let size = file.metadata()?.len();
    decode(&mut BufReader::new(file), size)
}

pub(crate) fn encode<W: Write>(w: &mut W, series: &TimeSeries) -> Result<(), SeriesFormatError> {
    let g = &series.grid;
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| SeriesFormatError::InvalidSeries(format!("{what} too large")))
    };
    if series.frames.len() != series.field_energy.len() {
        return Err(SeriesFormatError::InvalidSeries(
            "frame and field-energy counts differ".into(),
        ));
    }
    if let Some(bad) = series.frames.iter().position(|f| f.shape() != (g.nx, g.nv)) {
        return Err(SeriesFormatError::InvalidSeries(format!(
            "frame {bad} does not match the grid"
        )));
    }
    w.write_all(&VPTS_MAGIC)?;
    for v in [
        VPTS_VERSION,
        to_u32(g.nx, "nx")?,
        to_u32(g.nv, "nv")?,
        to_u32(series.frames.len(), "frame count")?,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in [series.dt, g.x_min, g.x_max, g.v_min, g.v_max] {
        w.write_all(&v.to_le_bytes())?;
    }
    for frame in &series.frames {
        for v in frame.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for v in &series.field_energy {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn decode<R: Read>(r: &mut R, size: u64) -> Result<TimeSeries, SeriesFormatError> {
    if size < HEADER_LEN as u64 {
        // Still report a wrong magic first when there is one to inspect.
        let mut head = vec![0u8; size as usize];
        r.read_exact(&mut head)?;
        if head.len() >= 4 && head[..4] != VPTS_MAGIC {
            return Err(SeriesFormatError::BadMagic([head[0], head[1], head[2], head[3]]));
        }
        return Err(SeriesFormatError::Truncated {
            expected: HEADER_LEN as u64,
            found: size,
        });
    }
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != VPTS_MAGIC {
        return Err(SeriesFormatError::BadMagic(magic));
    }
    let version = read_u32(r)?;
    if version != VPTS_VERSION {
        return Err(SeriesFormatError::UnsupportedVersion(version));
    }
    let nx = read_u32(r)? as usize;
    let nv = read_u32(r)? as usize;
    let count = read_u32(r)? as usize;
    let dt = read_f64(r)?;
    let (x_min, x_max, v_min, v_max) = (read_f64(r)?, read_f64(r)?, read_f64(r)?, read_f64(r)?);
    let grid = PhaseSpaceGrid::new(nx, nv, (x_min, x_max), (v_min, v_max))
        .map_err(|e| SeriesFormatError::InvalidHeader(e.to_string()))?;

    let expected = HEADER_LEN as u64 + 8 * (count as u64) * (nx as u64 * nv as u64 + 1);
    if size < expected {
        return Err(SeriesFormatError::Truncated {
            expected,
            found: size,
        });
    }
    if size > expected {
        return Err(SeriesFormatError::TrailingBytes(size - expected));
    }

    let mut frames = Vec::with_capacity(count);
    let mut buf = vec![0u8; nx * nv * 8];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        frames.push(
            Matrix::from_vec(nx, nv, data)
                .map_err(|e| SeriesFormatError::InvalidHeader(format!("frame data: {e}")))?,
        );
    }
    let field_energy = (0..count).map(|_| read_f64(r)).collect::<Result<_, _>>()?;
    Ok(TimeSeries {
        grid,
        dt,
        frames,
        ic_name: String::new(),
        field_energy,
    })
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
