//! Middlebury-layout flow files: `PIEH`, little-endian i32 width and
//! height, then interleaved little-endian f32 (u, v) in row-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowField;

pub const FLO_MAGIC: &[u8; 4] = b"PIEH";

pub fn encode_flow(field: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * field.vectors().len());
    out.extend_from_slice(FLO_MAGIC);
    out.extend_from_slice(&(field.width() as i32).to_le_bytes());
    out.extend_from_slice(&(field.height() as i32).to_le_bytes());
    for [u, v] in field.vectors() {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flow(bytes: &[u8], path: &Path) -> Result<FlowField> {
    if bytes.len() < 12 || &bytes[..4] != FLO_MAGIC {
        return Err(Error::format(path, "missing PIEH magic"));
    }
    let word = |i: usize| i32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (w, h) = (word(4), word(8));
    if w <= 0 || h <= 0 {
        return Err(Error::format(path, format!("bad flow dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format(path, "flow dimensions overflow"))?;
    let payload = &bytes[12..];
    if payload.len() != need {
        return Err(Error::format(
            path,
            format!("flow payload is {} bytes, expected {need}", payload.len()),
        ));
    }
    let vectors = payload
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes(c[..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..].try_into().unwrap()),
            ]
        })
        .collect();
    FlowField::new(w, h, vectors).map_err(|e| Error::format(path, e.to_string()))
}
