//! Flat named-tensor container.
//!
//! Layout (little-endian): the 4 bytes `rf1\0`, a `u32` tensor count, then
//! per tensor a `u32` name length, UTF-8 name, `u32` row count, `u32`
//! column count and `rows·cols` `f32` values.

use std::fs;
use std::io::{Read, Write};

use std::path::Path;

use super::{Mat, Real};
use crate::error::{Error, Result};

pub const CHECKPOINT_TAG: &[u8; 4] = b"rf1\0";

pub fn write_checkpoint<F: Real>(path: &Path, tensors: &[(String, &Mat<F>)]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_TAG);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, m) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for &v in m.data() {
            buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<F: Real>(path: &Path) -> Result<Vec<(String, Mat<F>)>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_TAG {
        return Err(Error::Checkpoint(format!("{}: missing rf1 tag", path.display())));
    }
    let count = cur.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let raw = cur.take(rows * cols * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| F::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        out.push((name, Mat::from_vec(rows, cols, data)));
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
