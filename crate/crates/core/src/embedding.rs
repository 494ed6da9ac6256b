//! Embedding records and the `GEMB` embedding database file.
//!
//! One record per image: the id and a fixed-dimension f32 vector, produced
//! either by the trained network or as a BoW histogram. File layout:
//! magic `GEMB`, version u32 LE, embed_dim u32 LE, count u64 LE, then
//! `count` records of (id length u16 LE, UTF-8 id bytes, embed_dim f32 LE).

use crate::error::{Error, Result};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const GEMB_MAGIC: &[u8; 4] = b"GEMB";
pub const GEMB_VERSION: u32 = 1;

/// Image id plus its embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub image_id: String,
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn new(image_id: impl Into<String>, vector: Vec<f32>) -> Result<Self> {
        let image_id = image_id.into();
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "embedding for '{image_id}' contains non-finite components"
            )));
        }
        Ok(Self { image_id, vector })
    }
}

/// Write an embedding database; all records must share one dimension.
pub fn write_embeddings(records: &[EmbeddingRecord], path: &Path) -> Result<()> {
    let dim = match records.first() {
        Some(r) => r.vector.len(),
        None => 0,
    };
    for r in records {
        if r.vector.len() != dim {
            return Err(Error::invalid(format!(
                "record '{}' has dim {}, expected {dim}",
                r.image_id,
                r.vector.len()
            )));
        }
        if r.image_id.len() > u16::MAX as usize {
            return Err(Error::invalid(format!(
                "image id too long ({} bytes)",
                r.image_id.len()
            )));
        }
    }
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(GEMB_MAGIC);
    buf.extend_from_slice(&GEMB_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        buf.extend_from_slice(&(r.image_id.len() as u16).to_le_bytes());
        buf.extend_from_slice(r.image_id.as_bytes());
        for v in &r.vector {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Read an embedding database written by [`write_embeddings`].
pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor::new(path, &buf);

    let magic = cur.take(4)?;
    if magic != GEMB_MAGIC {
        return Err(Error::format(path, "missing GEMB magic"));
    }
    let version = cur.u32()?;
    if version != GEMB_VERSION {
        return Err(Error::FormatVersion {
            path: path.display().to_string(),
            found: version,
            expected: GEMB_VERSION,
        });
    }
    let dim = cur.u32()? as usize;
    let count = cur.u64()? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let id_len = cur.u16()? as usize;
        let id_bytes = cur.take(id_len)?;
        let image_id = std::str::from_utf8(id_bytes)
            .map_err(|_| Error::format(path, "image id is not UTF-8"))?
            .to_string();
        let mut vector = Vec::with_capacity(dim);
        for _ in 0..dim {
            vector.push(f32::from_le_bytes(cur.take(4)?.try_into().unwrap()));
        }
        records.push(EmbeddingRecord { image_id, vector });
    }
    Ok(records)
}

/// Bounds-checked little-endian reader over a byte slice.
struct Cursor<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(path: &'a Path, buf: &'a [u8]) -> Self {
        Self { path, buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(self.path, "truncated file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.gemb");
        let records = vec![
            EmbeddingRecord::new("a", vec![1.0, -2.5, 0.25]).unwrap(),
            EmbeddingRecord::new("b", vec![0.0, 3.75, -1.0]).unwrap(),
        ];
        write_embeddings(&records, &path).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), records);
    }

    #[test]
    fn version_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.gemb");
        write_embeddings(&[EmbeddingRecord::new("a", vec![1.0]).unwrap()], &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4] = 99;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_embeddings(&path),
            Err(Error::FormatVersion { found: 99, .. })
        ));
    }

    #[test]
    fn non_finite_vectors_are_rejected() {
        assert!(EmbeddingRecord::new("x", vec![f32::NAN]).is_err());
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.gemb");
        write_embeddings(&[EmbeddingRecord::new("a", vec![1.0, 2.0]).unwrap()], &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_embeddings(&path), Err(Error::Format { .. })));
    }
}
