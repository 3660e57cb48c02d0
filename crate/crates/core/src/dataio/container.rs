//! Single-file array container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "RALM"
//! 4       4     format version, u32 LE (= 1)
//! 8       8     header length in bytes, u64 LE
//! 16      n     header, UTF-8 JSON: {"kind", "arrays": [{name, shape, offset, length}], "meta"}
//! 16+n    ...   payload: f32 LE arrays, offsets relative to the payload start
//! ```
//!
//! Arrays tile the payload exactly (no gaps, no overlap, no trailing
//! bytes), so every payload byte belongs to exactly one value.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"RALM";
pub const VERSION: u32 = 1;
const PREAMBLE: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: String,
    arrays: Vec<ArrayEntry>,
    meta: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: Value,
    pub arrays: Vec<Array>,
}

impl Container {
    pub fn new(kind: &str, meta: Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, shape: &[usize], values: Vec<f32>) -> Result<()> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::Shape(format!(
                "array {name}: shape {shape:?} holds {} values, got {}",
                shape.iter().product::<usize>(),
                values.len()
            )));
        }
        if self.arrays.iter().any(|a| a.name == name) {
            return Err(Error::Contract(format!("duplicate array name {name}")));
        }
        self.arrays.push(Array {
            name: name.into(),
            shape: shape.to_vec(),
            values,
        });
        Ok(())
    }

    pub fn push_f64(&mut self, name: &str, shape: &[usize], values: &[f64]) -> Result<()> {
        self.push(name, shape, values.iter().map(|&v| v as f32).collect())
    }

    pub fn get(&self, name: &str) -> std::result::Result<&Array, FormatError> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| FormatError::Mismatch(format!("missing array {name:?}")))
    }

    /// Array `name`, required to have `shape`.
    pub fn get_shaped(&self, name: &str, shape: &[usize]) -> std::result::Result<&[f32], FormatError> {
        let a = self.get(name)?;
        if a.shape != shape {
            return Err(FormatError::Mismatch(format!(
                "array {name:?} has shape {:?}, expected {shape:?}",
                a.shape
            )));
        }
        Ok(&a.values)
    }

    pub fn expect_kind(&self, kind: &str) -> std::result::Result<(), FormatError> {
        if self.kind != kind {
            return Err(FormatError::WrongKind {
                expected: kind.into(),
                found: self.kind.clone(),
            });
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let arrays = self
            .arrays
            .iter()
            .map(|a| {
                let length = 4 * a.values.len() as u64;
                let e = ArrayEntry {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
                    offset,
                    length,
                };
                offset += length;
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            kind: self.kind.clone(),
            arrays,
            meta: self.meta.clone(),
        })
        .map_err(|e| Error::Contract(format!("header not serializable: {e}")))?;
        let mut out = Vec::with_capacity(PREAMBLE + header.len() + offset as usize);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for a in &self.arrays {
            for v in &a.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, FormatError> {
        let truncated = |expected: usize| FormatError::Truncated {
            expected: expected as u64,
            actual: bytes.len() as u64,
        };
        if bytes.len() < 4 {
            return Err(truncated(PREAMBLE));
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(FormatError::BadMagic { found: magic });
        }
        if bytes.len() < PREAMBLE {
            return Err(truncated(PREAMBLE));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let payload_start = usize::try_from(header_len)
            .ok()
            .and_then(|n| n.checked_add(PREAMBLE))
            .ok_or_else(|| FormatError::Header(format!("header length {header_len} is not addressable")))?;
        if bytes.len() < payload_start {
            return Err(truncated(payload_start));
        }
        let header: Header =
            serde_json::from_slice(&bytes[PREAMBLE..payload_start]).map_err(|e| FormatError::Header(e.to_string()))?;

        let mut entries: Vec<&ArrayEntry> = header.arrays.iter().collect();
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].iter().any(|o| o.name == e.name) {
                return Err(FormatError::Header(format!("duplicate array name {:?}", e.name)));
            }
            let expected = e.shape.iter().try_fold(4u64, |acc, &d| acc.checked_mul(d as u64));
            if expected != Some(e.length) {
                return Err(FormatError::Mismatch(format!(
                    "array {:?}: shape {:?} does not match {} bytes",
                    e.name, e.shape, e.length
                )));
            }
        }
        entries.sort_by_key(|e| e.offset);
        let mut end = 0u64;
        for e in &entries {
            if e.offset != end {
                return Err(FormatError::Mismatch(format!(
                    "array {:?} starts at {} but the previous array ends at {end}",
                    e.name, e.offset
                )));
            }
            end = e
                .offset
                .checked_add(e.length)
                .ok_or_else(|| FormatError::Mismatch(format!("array {:?} overflows", e.name)))?;
        }
        let payload = &bytes[payload_start..];
        let need = payload_start as u64 + end;
        if (payload.len() as u64) < end {
            return Err(FormatError::Truncated {
                expected: need,
                actual: bytes.len() as u64,
            });
        }
        if payload.len() as u64 > end {
            return Err(FormatError::Mismatch(format!(
                "{} trailing payload bytes",
                payload.len() as u64 - end
            )));
        }
        let arrays = header
            .arrays
            .iter()
            .map(|e| {
                let raw = &payload[e.offset as usize..(e.offset + e.length) as usize];
                Array {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    values: raw
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect(),
                }
            })
            .collect();
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }

    /// Writes to a temporary file next to `path`, then renames it over.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| Error::format(path, e))
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
