//! `PFV1` feature files.
//!
//! Little-endian layout:
//!
//! ```text
//! "PFV1"                      magic
//! u32                         record count
//! u32                         dim
//! u16 + bytes                 extractor id (UTF-8)
//! per record:
//!   u16 + bytes               patch id (UTF-8)
//!   i32                       class label, -1 when unlabeled
//!   dim x f32                 values
//! ```

use std::fs;
use std::path::Path;

use super::{FeatureSet, FeatureVector};
use crate::error::{Error, Result};

pub const PFV_MAGIC: &[u8; 4] = b"PFV1";

const UNLABELED: i32 = -1;

fn push_str(out: &mut Vec<u8>, s: &str, what: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::Format(format!("{what} `{s}` is longer than 65535 bytes")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn encode_features(set: &FeatureSet) -> Result<Vec<u8>> {
    let count = u32::try_from(set.len()).map_err(|_| Error::Format("too many records".into()))?;
    let dim = u32::try_from(set.dim()).map_err(|_| Error::Format("dimension too large".into()))?;
    let mut out = Vec::with_capacity(16 + set.len() * (set.dim() * 4 + 32));
    out.extend_from_slice(PFV_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    push_str(&mut out, set.extractor_id(), "extractor id")?;
    for v in set.vectors() {
        push_str(&mut out, &v.patch_id, "patch id")?;
        let label = match v.label {
            None => UNLABELED,
            Some(c) => i32::try_from(c).map_err(|_| {
                Error::Format(format!("class {c} does not fit a signed 32-bit label"))
            })?,
        };
        out.extend_from_slice(&label.to_le_bytes());
        for x in &v.values {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated file: {what} at byte {} needs {n} bytes",
                    self.pos
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u16(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSet> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic: [u8; 4] = cur.array("magic")?;
    if &magic != PFV_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:02x?}, expected `PFV1`"
        )));
    }
    let count = cur.u32("record count")? as usize;
    let dim = cur.u32("dimension")? as usize;
    if dim == 0 {
        return Err(Error::Format("dimension is zero".into()));
    }
    let extractor_id = cur.string("extractor id")?;
    let mut vectors = Vec::with_capacity(count.min(bytes.len() / (dim * 4 + 6)));
    for _ in 0..count {
        let patch_id = cur.string("patch id")?;
        let label = match i32::from_le_bytes(cur.array("label")?) {
            UNLABELED => None,
            l if l >= 0 => Some(l as u32),
            l => return Err(Error::Format(format!("invalid label {l} for `{patch_id}`"))),
        };
        let raw = cur.take(dim * 4, "feature values")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        vectors.push(FeatureVector::new(patch_id, label, values));
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after {count} records",
            bytes.len() - cur.pos
        )));
    }
    FeatureSet::new(extractor_id, dim, vectors).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_features(set: &FeatureSet, path: &Path) -> Result<()> {
    let bytes = encode_features(set)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}
