//! Binary index file, little-endian:
//!
//! ```text
//! magic "EXPSIDX1" | version u32 | dimension u32 | count u64 | normalized u8
//! per passage: id_len u32, id | title_len u32, title | text_len u32, text | dimension × f32
//! ```

use std::path::Path;

use super::{norm, IndexError, KnowledgeIndex, Passage};
use crate::io::{self, IoError};

pub const MAGIC: &[u8; 8] = b"EXPSIDX1";
pub const FORMAT_VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Serializes the index. Embeddings are written bit-exactly.
pub fn write_index(index: &KnowledgeIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(index.dimension() as u32).to_le_bytes());
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    out.push(1);
    for p in index.passages() {
        put_str(&mut out, &p.passage_id);
        put_str(&mut out, &p.title);
        put_str(&mut out, &p.text);
        for x in &p.embedding {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], IndexError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(IndexError::Truncated(what))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &'static str) -> Result<String, IndexError> {
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| IndexError::Format(format!("{what} is not valid UTF-8")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn read_index(bytes: &[u8]) -> Result<KnowledgeIndex, IndexError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MAGIC {
        return Err(IndexError::Format("bad magic bytes".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(IndexError::Version {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let dimension = r.u32("dimension")? as usize;
    let count = r.u64("count")?;
    let flag = r.take(1, "normalization flag")?[0];
    if flag != 1 {
        return Err(IndexError::Format(format!("normalization flag is {flag}, expected 1")));
    }
    // Every passage needs at least three length prefixes plus its vector.
    let min_record = 12 + 4 * dimension;
    if count > (r.remaining() / min_record.max(1)) as u64 {
        return Err(IndexError::Truncated("passages"));
    }
    let mut passages = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let passage_id = r.string("passage id")?;
        let title = r.string("passage title")?;
        let text = r.string("passage text")?;
        let raw = r.take(4 * dimension, "embedding")?;
        let embedding: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if (norm(&embedding) - 1.0).abs() > 1e-5 {
            return Err(IndexError::Format(format!(
                "passage {passage_id}: stored embedding is not unit-norm"
            )));
        }
        passages.push(Passage {
            passage_id,
            title,
            text,
            embedding,
        });
    }
    if r.remaining() != 0 {
        return Err(IndexError::Format(format!(
            "{} trailing bytes after {count} passages",
            r.remaining()
        )));
    }
    KnowledgeIndex::from_normalized(dimension, passages)
}

pub fn save_index(index: &KnowledgeIndex, path: impl AsRef<Path>) -> Result<(), IndexError> {
    io::atomic_write(path, &write_index(index))?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<KnowledgeIndex, IndexError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| IoError::fs(path, e))?;
    read_index(&bytes)
}

impl KnowledgeIndex {
    /// SHA-256 of the serialized index, used in provenance manifests.
    pub fn checksum(&self) -> String {
        io::sha256_hex(&write_index(self))
    }
}
