//! `DBW1` weight files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic  "DBW1"
//! u32    layer count
//! per layer:
//!   u32  name length, then UTF-8 name bytes
//!   u32  rank, then rank x u32 dims
//!   f32  data (product of dims values)
//! ```
//!
//! The file size is exactly [`header_bytes`] plus four bytes per parameter.

use std::io::{Read, Write};

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DBW1";

#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Bytes spent on everything except parameter values for the given layout.
pub fn header_bytes<'a>(layout: impl IntoIterator<Item = (&'a str, &'a [usize])>) -> u64 {
    8 + layout
        .into_iter()
        .map(|(name, shape)| 4 + name.len() as u64 + 4 + 4 * shape.len() as u64)
        .sum::<u64>()
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::input(format!("{what} {v} exceeds u32")))
}

pub fn write_weights<W: Write>(mut w: W, entries: &[WeightEntry]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&to_u32(entries.len(), "layer count")?.to_le_bytes())?;
    for e in entries {
        let n: usize = e.shape.iter().product();
        if n != e.data.len() {
            return Err(Error::input(format!("layer `{}` shape/data mismatch", e.name)));
        }
        w.write_all(&to_u32(e.name.len(), "name length")?.to_le_bytes())?;
        w.write_all(e.name.as_bytes())?;
        w.write_all(&to_u32(e.shape.len(), "rank")?.to_le_bytes())?;
        for &d in &e.shape {
            w.write_all(&to_u32(d, "dimension")?.to_le_bytes())?;
        }
        for v in &e.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn to_bytes(entries: &[WeightEntry]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_weights(&mut buf, entries)?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::parse(what, format!("truncated weight file: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_weights<R: Read>(mut r: R) -> Result<Vec<WeightEntry>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::parse("magic", e.to_string()))?;
    if &magic != MAGIC {
        return Err(Error::parse("magic", "not a DBW1 weight file"));
    }
    let count = read_u32(&mut r, "layer count")?;
    let mut entries = Vec::with_capacity(count as usize);
    for i in 0..count {
        let name_len = read_u32(&mut r, "name length")? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|e| Error::parse(format!("layer {i} name"), e.to_string()))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::parse(format!("layer {i} name"), "invalid UTF-8"))?;
        let rank = read_u32(&mut r, "rank")? as usize;
        let shape = (0..rank)
            .map(|_| read_u32(&mut r, "dimension").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; 4 * n];
        r.read_exact(&mut raw)
            .map_err(|e| Error::parse(format!("layer `{name}` data"), e.to_string()))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push(WeightEntry { name, shape, data });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::parse("eof", "trailing bytes after last layer"));
    }
    Ok(entries)
}
