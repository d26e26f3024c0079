//! On-disk tensor format: magic `UOFT`, `u32` version (1), `u32` ndim,
//! `ndim × u32` dims, then little-endian `f32` data in row-major order.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::types::FeatureMap;

pub const MAGIC: &[u8; 4] = b"UOFT";
pub const VERSION: u32 = 1;

pub fn write_tensor<W: Write>(w: &mut W, dims: &[u32], data: &[f32]) -> Result<()> {
    let expected: usize = dims.iter().map(|&d| d as usize).product();
    if expected != data.len() {
        return Err(Error::InvalidTensorFile(format!(
            "dims {dims:?} describe {expected} values, got {}",
            data.len()
        )));
    }
    let ndim = u32::try_from(dims.len())
        .map_err(|_| Error::InvalidTensorFile("too many dimensions".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&ndim.to_le_bytes())?;
    for d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<(Vec<u32>, Vec<f32>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidTensorFile(format!("bad magic {magic:?}")));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::InvalidTensorFile(format!("unsupported version {version}")));
    }
    let ndim = read_u32(r)?;
    if ndim > 16 {
        return Err(Error::InvalidTensorFile(format!("implausible ndim {ndim}")));
    }
    let dims = (0..ndim).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or_else(|| Error::InvalidTensorFile("element count overflows".into()))?;
    let mut raw = Vec::new();
    r.take(count as u64 * 4).read_to_end(&mut raw)?;
    if raw.len() != count * 4 {
        return Err(Error::InvalidTensorFile(format!(
            "expected {} data bytes, found {}",
            count * 4,
            raw.len()
        )));
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((dims, data))
}

/// Writes a feature map as a `(H, W, C)` tensor.
pub fn write_features<W: Write>(w: &mut W, features: &FeatureMap) -> Result<()> {
    let dims = [features.rows(), features.cols(), features.channels()]
        .map(|d| d as u32);
    write_tensor(w, &dims, features.data())
}

/// Reads a `(H, W, C)` tensor back into a feature map; geometry that the
/// file does not carry is supplied by the caller.
pub fn read_features<R: Read>(
    r: &mut R,
    stride: f64,
    image_width: usize,
    image_height: usize,
) -> Result<FeatureMap> {
    let (dims, data) = read_tensor(r)?;
    let [h, w, c] = dims[..] else {
        return Err(Error::InvalidTensorFile(format!(
            "expected 3 dims (H, W, C), found {dims:?}"
        )));
    };
    FeatureMap::new(
        h as usize,
        w as usize,
        c as usize,
        data,
        stride,
        image_width,
        image_height,
    )
}
