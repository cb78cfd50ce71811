//! Named-tensor archive: a magic line, a tensor count, then per tensor its
//! name, dtype tag, shape and raw little-endian values.

use std::io::{Read, Write};
use std::path::Path;

use crate::nn::NamedTensor;
use crate::{LomaeError, Result};

const MAGIC: &[u8; 8] = b"LMTARC1\n";
const DTYPE: &str = "f64";

pub fn write(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        buf.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.push(DTYPE.len() as u8);
        buf.extend_from_slice(DTYPE.as_bytes());
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        buf.extend_from_slice(&((t.data.len() * 8) as u64).to_le_bytes());
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| LomaeError::io(path, e))?;
    f.write_all(&buf).map_err(|e| LomaeError::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(LomaeError::Format {
                path: self.path.to_path_buf(),
                reason: format!("truncated at byte {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fail(&self, reason: impl Into<String>) -> LomaeError {
        LomaeError::Format {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

pub fn read(path: &Path) -> Result<Vec<NamedTensor>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| LomaeError::io(path, e))?;
    let mut c = Cursor { bytes: &bytes, pos: 0, path };
    if c.take(MAGIC.len())? != MAGIC {
        return Err(c.fail("not a tensor archive"));
    }
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = c.u32()? as usize;
        let name = String::from_utf8(c.take(nlen)?.to_vec()).map_err(|_| c.fail("tensor name is not utf-8"))?;
        let dlen = c.take(1)?[0] as usize;
        let dtype = c.take(dlen)?;
        if dtype != DTYPE.as_bytes() {
            return Err(c.fail(format!("tensor '{name}' has unsupported dtype")));
        }
        let ndim = c.u32()? as usize;
        let shape = (0..ndim).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let nbytes = c.u64()? as usize;
        let expect = shape.iter().product::<usize>() * 8;
        if nbytes != expect {
            return Err(c.fail(format!("tensor '{name}' holds {nbytes} bytes, shape needs {expect}")));
        }
        let data = c
            .take(nbytes)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push(NamedTensor { name, shape, data });
    }
    if c.pos != bytes.len() {
        return Err(c.fail("trailing bytes after last tensor"));
    }
    Ok(out)
}
