//! Single-slice tensor container: a text header line `dtype=f32 shape=H,W`
//! followed by `H*W` little-endian `f32` values in row-major order.

use std::path::Path;

use crate::{LomaeError, Result, Slice};

pub fn encode(slice: &Slice) -> Vec<u8> {
    let (h, w) = slice.dim();
    let mut buf = format!("dtype=f32 shape={h},{w}\n").into_bytes();
    buf.reserve(h * w * 4);
    for &v in slice.iter() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Slice> {
    let bad = |reason: String| LomaeError::Format {
        path: path.to_path_buf(),
        reason,
    };
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not utf-8".into()))?;
    let mut dtype = None;
    let mut shape = None;
    for field in header.split_whitespace() {
        match field.split_once('=') {
            Some(("dtype", v)) => dtype = Some(v),
            Some(("shape", v)) => shape = Some(v),
            _ => return Err(bad(format!("unexpected header field '{field}'"))),
        }
    }
    if dtype != Some("f32") {
        return Err(bad(format!("unsupported dtype {dtype:?}")));
    }
    let dims: Vec<usize> = shape
        .ok_or_else(|| bad("missing shape".into()))?
        .split(',')
        .map(|d| d.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad(format!("bad shape: {e}")))?;
    let [h, w] = dims[..] else {
        return Err(bad(format!("expected 2 dimensions, got {}", dims.len())));
    };
    let body = &bytes[nl + 1..];
    if body.len() != h * w * 4 {
        return Err(bad(format!("payload is {} bytes, shape needs {}", body.len(), h * w * 4)));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite value".into()));
    }
    Ok(Slice::from_shape_vec((h, w), data).expect("length checked"))
}

pub fn write_slice(path: &Path, slice: &Slice) -> Result<()> {
    std::fs::write(path, encode(slice)).map_err(|e| LomaeError::io(path, e))
}

pub fn read_slice(path: &Path) -> Result<Slice> {
    let bytes = std::fs::read(path).map_err(|e| LomaeError::io(path, e))?;
    decode(&bytes, path)
}
