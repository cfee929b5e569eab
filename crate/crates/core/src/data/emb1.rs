//! EMB1: a minimal binary container for dense float64 matrices.
//!
//! Layout (all little-endian):
//!
//! | bytes  | content                     |
//! |--------|-----------------------------|
//! | 0..4   | magic `EMB1`                |
//! | 4..8   | version, `u32` (= 1)        |
//! | 8..16  | rows `n`, `u64`             |
//! | 16..24 | columns `d`, `u64`          |
//! | 24..   | `n * d` `f64` values, row-major |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use super::EmbeddingMatrix;
use crate::error::{Error, Result};

pub const EMB1_MAGIC: [u8; 4] = *b"EMB1";
pub const EMB1_VERSION: u32 = 1;
const HEADER_LEN: u64 = 24;

/// Opens an EMB1 file and checks its header against the file length.
fn open_checked(path: &Path) -> Result<(BufReader<File>, u64, u64)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut reader = BufReader::new(file);

    let mut header = [0u8; HEADER_LEN as usize];
    reader.read_exact(&mut header).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Malformed {
                path: path.to_path_buf(),
                reason: format!("file is {file_len} bytes, shorter than the header"),
            }
        } else {
            Error::io(path, e)
        }
    })?;
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != EMB1_MAGIC {
        return Err(Error::MagicMismatch {
            path: path.to_path_buf(),
            found: magic,
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != EMB1_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let d = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .and_then(|b| b.checked_add(HEADER_LEN));
    if expected != Some(file_len) {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            reason: format!("header declares {n}x{d} but the file has {file_len} bytes"),
        });
    }
    Ok((reader, n, d))
}

/// Shape `(n, d)` of an EMB1 file, read from its header only.
pub fn read_emb1_header(path: &Path) -> Result<(usize, usize)> {
    let (_, n, d) = open_checked(path)?;
    Ok((n as usize, d as usize))
}

/// Reads a raw EMB1 matrix without the finiteness check of [`read_emb1`].
fn read_emb1_raw(path: &Path) -> Result<Array2<f64>> {
    let (mut reader, n, d) = open_checked(path)?;
    let count = (n * d) as usize;
    let mut bytes = vec![0u8; count * 8];
    reader
        .read_exact(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((n as usize, d as usize), data)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))
}

/// Reads an EMB1 file into a validated [`EmbeddingMatrix`].
pub fn read_emb1(path: &Path) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::new(read_emb1_raw(path)?)
}

/// Writes any 2-D float64 view as EMB1.
pub fn write_emb1(path: &Path, values: ArrayView2<'_, f64>) -> Result<()> {
    let (n, d) = values.dim();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(&EMB1_MAGIC).map_err(io)?;
    w.write_all(&EMB1_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(n as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
    for v in values.iter() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}
