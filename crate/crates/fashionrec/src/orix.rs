//! ORIX binary index file.
//!
//! ```text
//! "ORIX" | version u32 | dim u32 | count u64 | flags u32
//! count x (id_len u32, id bytes[, cat_len u32, cat bytes])
//! count x dim f32
//! ```
//!
//! All integers and floats are little-endian. Flag bit 0 marks the presence
//! of a category column; a category length of `u32::MAX` means "none".

use std::path::Path;

use fashionrec_core::retrieval::{IndexEntry, KnnIndex};

use crate::checkpoint::{decode_f32, encode_f32};
use crate::error::{Error, Result};
use crate::io::{read_bytes, write_atomic};

pub const MAGIC: &[u8; 4] = b"ORIX";
pub const VERSION: u32 = 1;
const HAS_CATEGORIES: u32 = 1;
const NO_CATEGORY: u32 = u32::MAX;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u32).to_le_bytes());
    out.extend(s.as_bytes());
}

pub fn encode(index: &KnnIndex) -> Vec<u8> {
    let cats = index.has_categories();
    let mut out = Vec::new();
    out.extend(MAGIC);
    out.extend(VERSION.to_le_bytes());
    out.extend((index.dim() as u32).to_le_bytes());
    out.extend((index.len() as u64).to_le_bytes());
    out.extend((if cats { HAS_CATEGORIES } else { 0 }).to_le_bytes());
    for e in index.entries() {
        put_str(&mut out, &e.item_id);
        if cats {
            match &e.category {
                Some(c) => put_str(&mut out, c),
                None => out.extend(NO_CATEGORY.to_le_bytes()),
            }
        }
    }
    for e in index.entries() {
        out.extend(encode_f32(&e.vector));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("ORIX truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn string(&mut self, len: u32, what: &str) -> Result<String> {
        let b = self.take(len as usize, what)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| Error::Format(format!("ORIX {what} is not UTF-8")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<KnnIndex> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("not an ORIX file (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported ORIX version {version}")));
    }
    let dim = r.u32("dim")? as usize;
    let count = usize::try_from(r.u64("count")?)
        .map_err(|_| Error::Format("ORIX count overflows".into()))?;
    let flags = r.u32("flags")?;
    if flags & !HAS_CATEGORIES != 0 {
        return Err(Error::Format(format!("unknown ORIX flags {flags:#x}")));
    }
    let mut ids = Vec::with_capacity(count.min(bytes.len() / 4));
    for _ in 0..count {
        let len = r.u32("id length")?;
        let id = r.string(len, "item id")?;
        let category = if flags & HAS_CATEGORIES != 0 {
            match r.u32("category length")? {
                NO_CATEGORY => None,
                len => Some(r.string(len, "category")?),
            }
        } else {
            None
        };
        ids.push((id, category));
    }
    let payload = r.take(
        count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("ORIX size overflows".into()))?,
        "vectors",
    )?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "ORIX has {} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let values = decode_f32(payload)?;
    let entries =
        ids.into_iter()
            .zip(values.chunks_exact(dim.max(1)))
            .map(|((item_id, category), v)| IndexEntry {
                item_id,
                vector: v.to_vec(),
                category,
            });
    Ok(KnnIndex::from_entries(dim, entries)?)
}

pub fn save(index: &KnnIndex, path: &Path) -> Result<()> {
    write_atomic(path, &encode(index))
}

pub fn load(path: &Path) -> Result<KnnIndex> {
    decode(&read_bytes(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
