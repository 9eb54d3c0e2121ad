//! Binary PGM (P5) codec.
//!
//! Header is `P5`, width, height and maxval separated by whitespace, with
//! `#` comments allowed between tokens, then exactly one whitespace byte
//! before the raster. Samples are one byte for maxval <= 255 and two
//! big-endian bytes otherwise. The encoder always writes the canonical
//! header `P5\n<w> <h>\n<maxval>\n`.

use std::path::Path;

use crate::error::{Error, Result};

/// Raw grayscale raster as stored on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, maxval: u16, samples: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!("PGM dimensions {width}x{height}")));
        }
        if maxval == 0 {
            return Err(Error::Invalid("PGM maxval 0".into()));
        }
        if samples.len() != width * height {
            return Err(Error::Invalid(format!(
                "PGM raster has {} samples, expected {}",
                samples.len(),
                width * height
            )));
        }
        if let Some(s) = samples.iter().find(|&&s| s > maxval) {
            return Err(Error::Invalid(format!("sample {s} exceeds maxval {maxval}")));
        }
        Ok(Self {
            width,
            height,
            maxval,
            samples,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval);
        let wide = self.maxval > 255;
        let mut out = Vec::with_capacity(header.len() + self.samples.len() * (1 + wide as usize));
        out.extend_from_slice(header.as_bytes());
        if wide {
            for &s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        } else {
            out.extend(self.samples.iter().map(|&s| s as u8));
        }
        out
    }

    /// Decodes a P5 stream. `path` is only used in error messages.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::format(path, msg.to_string());
        if bytes.len() < 2 || &bytes[..2] != b"P5" {
            return Err(bad("missing P5 magic"));
        }
        let mut pos = 2;
        let mut fields = [0usize; 3];
        for field in fields.iter_mut() {
            // whitespace and comments
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while pos < bytes.len() && bytes[pos] != b'\n' {
                            pos += 1;
                        }
                    }
                    Some(_) => break,
                    None => return Err(bad("truncated header")),
                }
            }
            let start = pos;
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("expected a decimal header field"));
            }
            let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
            *field = text.parse().map_err(|_| bad("header field out of range"))?;
        }
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            _ => return Err(bad("header not terminated by whitespace")),
        }
        let [width, height, maxval] = fields;
        if width == 0 || height == 0 {
            return Err(bad("zero image dimension"));
        }
        if maxval == 0 || maxval > u16::MAX as usize {
            return Err(bad("maxval must be in 1..=65535"));
        }
        let count = width
            .checked_mul(height)
            .ok_or_else(|| bad("image dimensions overflow"))?;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let raster = &bytes[pos..];
        if raster.len() < need {
            return Err(bad("truncated raster"));
        }
        let samples: Vec<u16> = if wide {
            raster[..need]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        } else {
            raster[..need].iter().map(|&b| b as u16).collect()
        };
        if samples.iter().any(|&s| s as usize > maxval) {
            return Err(bad("sample exceeds maxval"));
        }
        Ok(Self {
            width,
            height,
            maxval: maxval as u16,
            samples,
        })
    }
}
