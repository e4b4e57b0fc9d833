//! Flat binary container for float data plus a JSON sidecar.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic   [u8; 4]  b"MLOS"
//! version u32      FORMAT_VERSION
//! dim     u32      floats per row
//! count   u64      number of rows
//! data    f32 x dim x count
//! ```
//!
//! The sidecar lives next to the binary file with a `.json` extension and
//! describes what the rows mean.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"MLOS";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Error)]
pub enum BinError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}: not a tensor file (bad magic)")]
    BadMagic(PathBuf),
    #[error("{path}: unsupported format version {version}")]
    Version { path: PathBuf, version: u32 },
    #[error("{path}: expected {expected} bytes of data, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("row width {got} does not match dim {dim}")]
    RowWidth { dim: usize, got: usize },
}

/// Rows of `dim` floats.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl TensorFile {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    /// Appends a row and returns its index.
    pub fn push_row(&mut self, row: &[f64]) -> Result<usize, BinError> {
        if row.len() != self.dim {
            return Err(BinError::RowWidth {
                dim: self.dim,
                got: row.len(),
            });
        }
        self.data.extend(row.iter().map(|&x| x as f32));
        Ok(self.rows() - 1)
    }

    /// Appends a flat block of values (any length divisible by `dim`) and
    /// returns the starting row.
    pub fn push_flat(&mut self, values: impl IntoIterator<Item = f64>) -> usize {
        let start = self.rows();
        self.data.extend(values.into_iter().map(|x| x as f32));
        start
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data[i * self.dim..(i + 1) * self.dim]
            .iter()
            .map(|&x| f64::from(x))
            .collect()
    }

    pub fn slice(&self, start: usize, len: usize) -> Vec<f64> {
        self.data[start..start + len]
            .iter()
            .map(|&x| f64::from(x))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), BinError> {
        let io = |source| BinError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(&MAGIC).map_err(io)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.rows() as u64).to_le_bytes()).map_err(io)?;
        for x in &self.data {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, BinError> {
        let io = |source| BinError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(io)?)
            .read_to_end(&mut bytes)
            .map_err(io)?;
        if bytes.len() < HEADER_LEN || bytes[..4] != MAGIC {
            return Err(BinError::BadMagic(path.to_path_buf()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(BinError::Version {
                path: path.to_path_buf(),
                version,
            });
        }
        let dim = u32_at(8) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[HEADER_LEN..];
        let expected = dim * count * 4;
        if body.len() != expected {
            return Err(BinError::Truncated {
                path: path.to_path_buf(),
                expected,
                found: body.len(),
            });
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dim, data })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `value` as pretty JSON.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), BinError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| BinError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| BinError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, BinError> {
    let text = std::fs::read_to_string(path).map_err(|source| BinError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| BinError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a tensor file and its sidecar.
pub fn write_with_sidecar<T: Serialize>(
    path: &Path,
    tensor: &TensorFile,
    sidecar: &T,
) -> Result<(), BinError> {
    tensor.write(path)?;
    write_json(&sidecar_path(path), sidecar)
}

pub fn read_with_sidecar<T: DeserializeOwned>(path: &Path) -> Result<(TensorFile, T), BinError> {
    Ok((TensorFile::read(path)?, read_json(&sidecar_path(path))?))
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), BinError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).map_err(|source| BinError::Json {
            path: path.to_path_buf(),
            source,
        })?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| BinError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, BinError> {
    let text = std::fs::read_to_string(path).map_err(|source| BinError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| BinError::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let mut t = TensorFile::new(3);
        t.push_row(&[1.0, -2.5, 0.25]).unwrap();
        t.push_row(&[4.0, 5.0, 6.0]).unwrap();
        assert!(t.push_row(&[1.0]).is_err());
        t.write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"MLOS");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(bytes[24..28].try_into().unwrap()), -2.5);
        assert_eq!(bytes.len(), 20 + 6 * 4);
        let back = TensorFile::read(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.row(1), vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOPE0000000000000000").unwrap();
        assert!(matches!(TensorFile::read(&path), Err(BinError::BadMagic(_))));
        let mut t = TensorFile::new(2);
        t.push_row(&[1.0, 2.0]).unwrap();
        t.write(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(TensorFile::read(&path), Err(BinError::Truncated { .. })));
    }
}
