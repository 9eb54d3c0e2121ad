//! Frame sequences, detection and keypoint sidecars, and the on-disk
//! formats of every pipeline artifact.

mod flo;
mod pgm;
mod records;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

pub use flo::{decode_flow, encode_flow, FLO_MAGIC};
pub use pgm::GrayImage;
pub use records::{format_detections, format_keypoints, parse_detections, parse_keypoints};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::supervise::PartLabelMap;

/// Single-channel luminance raster with intensities in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    index: u32,
    luma: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, index: u32, luma: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!("frame dimensions {width}x{height}")));
        }
        if luma.len() != width * height {
            return Err(Error::Invalid(format!(
                "frame has {} samples, expected {}",
                luma.len(),
                width * height
            )));
        }
        if let Some(v) = luma.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invalid(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            index,
            luma,
        })
    }

    pub fn constant(width: usize, height: usize, index: u32, value: f64) -> Result<Self> {
        Self::new(width, height, index, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn luma(&self) -> &[f64] {
        &self.luma
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.luma[y * self.width + x]
    }

    pub fn with_index(mut self, index: u32) -> Self {
        self.index = index;
        self
    }

    /// Normalizes samples by the image's maxval.
    pub fn from_gray(img: &GrayImage, index: u32) -> Self {
        let scale = 1.0 / img.maxval as f64;
        let luma = img.samples.iter().map(|&s| s as f64 * scale).collect();
        Self {
            width: img.width,
            height: img.height,
            index,
            luma,
        }
    }

    /// Quantizes to 8 bits. Frames loaded from 8-bit PGMs survive exactly.
    pub fn to_gray(&self) -> GrayImage {
        let samples = self.luma.iter().map(|v| (v * 255.0).round() as u16).collect();
        GrayImage {
            width: self.width,
            height: self.height,
            maxval: 255,
            samples,
        }
    }
}

/// Axis-aligned box, `[x0, x1) x [y0, y1)` in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl BBox {
    pub fn new(x0: i32, y0: i32, x1: i32, y1: i32) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::Invalid(format!("degenerate box ({x0}, {y0}, {x1}, {y1})")));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> u32 {
        (self.x1 - self.x0) as u32
    }

    pub fn height(&self) -> u32 {
        (self.y1 - self.y0) as u32
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 as i64 && x < self.x1 as i64 && y >= self.y0 as i64 && y < self.y1 as i64
    }

    /// Intersects with `[0, width) x [0, height)`; `None` if nothing is left.
    pub fn clamp_to(&self, width: usize, height: usize) -> Option<BBox> {
        let (w, h) = (
            width.min(i32::MAX as usize) as i32,
            height.min(i32::MAX as usize) as i32,
        );
        BBox::new(
            self.x0.clamp(0, w),
            self.y0.clamp(0, h),
            self.x1.clamp(0, w),
            self.y1.clamp(0, h),
        )
        .ok()
    }
}

/// Person box from an external detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub frame_index: u32,
    pub bbox: BBox,
    pub score: f64,
}

/// Annotated joints used for evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Joint {
    Face,
    ShoulderMid,
    Belly,
    HipMid,
    KneeMid,
    AnkleMid,
}

impl Joint {
    pub const ALL: [Joint; 6] = [
        Joint::Face,
        Joint::ShoulderMid,
        Joint::Belly,
        Joint::HipMid,
        Joint::KneeMid,
        Joint::AnkleMid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Joint::Face => "face",
            Joint::ShoulderMid => "shoulder_mid",
            Joint::Belly => "belly",
            Joint::HipMid => "hip_mid",
            Joint::KneeMid => "knee_mid",
            Joint::AnkleMid => "ankle_mid",
        }
    }

    pub fn from_name(name: &str) -> Option<Joint> {
        Joint::ALL.into_iter().find(|j| j.name() == name)
    }
}

/// Ground-truth joints of one frame; absent entries are unannotated.
#[derive(Clone, Debug, PartialEq)]
pub struct Keypoints {
    pub frame_index: u32,
    pub joints: BTreeMap<Joint, (f64, f64)>,
}

pub fn frame_file_name(index: u32) -> String {
    format!("frame_{index:06}.pgm")
}

pub fn flow_file_name(index: u32) -> String {
    format!("flow_{index:06}.flo")
}

pub fn label_file_name(index: u32) -> String {
    format!("label_{index:06}.pgm")
}

/// Parses `<prefix><digits><suffix>` with at least six digits, the shape
/// produced by `%06d`.
pub fn parse_indexed_name(name: &str, prefix: &str, suffix: &str) -> Option<u32> {
    let digits = name.strip_prefix(prefix)?.strip_suffix(suffix)?;
    if digits.len() < 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Lists `prefix######suffix` files in `dir`, sorted by index.
pub fn list_indexed_files(dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<(u32, PathBuf)>> {
    let mut found: BTreeMap<u32, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(index) = name.to_str().and_then(|n| parse_indexed_name(n, prefix, suffix)) else {
            continue;
        };
        let path = entry.path();
        if let Some(first) = found.get(&index) {
            // report in name order so the error does not depend on listing order
            let (first, second) = if *first < path {
                (first.clone(), path)
            } else {
                (path, first.clone())
            };
            return Err(Error::Duplicate { index, first, second });
        }
        found.insert(index, path);
    }
    Ok(found.into_iter().collect())
}

pub fn list_frame_files(dir: &Path) -> Result<Vec<(u32, PathBuf)>> {
    list_indexed_files(dir, "frame_", ".pgm")
}

pub fn read_frame(path: &Path, index: u32) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Frame::from_gray(&GrayImage::decode(&bytes, path)?, index))
}

pub fn write_frame(frame: &Frame, path: &Path) -> Result<()> {
    write_atomic(path, &frame.to_gray().encode())
}

/// Loads every `frame_%06d.pgm` in `dir`, ordered by the parsed index.
pub fn load_frame_sequence(dir: &Path) -> Result<Vec<Frame>> {
    list_frame_files(dir)?
        .into_iter()
        .map(|(index, path)| read_frame(&path, index))
        .collect()
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, path)
}

pub fn write_detections(dets: &[Detection], path: &Path) -> Result<()> {
    write_atomic(path, format_detections(dets).as_bytes())
}

pub fn load_keypoints(path: &Path) -> Result<Vec<Keypoints>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_keypoints(&text, path)
}

pub fn write_keypoints(kps: &[Keypoints], path: &Path) -> Result<()> {
    write_atomic(path, format_keypoints(kps).as_bytes())
}

pub fn write_flow(field: &FlowField, path: &Path) -> Result<()> {
    write_atomic(path, &encode_flow(field))
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flow(&bytes, path)
}

pub fn encode_label_map(map: &PartLabelMap) -> Vec<u8> {
    GrayImage {
        width: map.width(),
        height: map.height(),
        maxval: 255,
        samples: map.labels().iter().map(|&l| l as u16).collect(),
    }
    .encode()
}

pub fn write_label_map(map: &PartLabelMap, path: &Path) -> Result<()> {
    write_atomic(path, &encode_label_map(map))
}

/// Reads a label map. With `parts` given, any label above it is an error;
/// without it the part count is taken from the largest label present. The
/// frame index comes from a `label_%06d.pgm` file name, 0 otherwise.
pub fn read_label_map(path: &Path, parts: Option<u8>) -> Result<PartLabelMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = GrayImage::decode(&bytes, path)?;
    if img.maxval > 255 {
        return Err(Error::format(path, "label maps must be 8-bit"));
    }
    let labels: Vec<u8> = img.samples.iter().map(|&s| s as u8).collect();
    let max = labels.iter().copied().max().unwrap_or(0);
    let parts = match parts {
        Some(k) if max > k => {
            return Err(Error::LabelOutOfRange {
                path: path.to_path_buf(),
                value: max,
                parts: k,
            })
        }
        Some(k) => k,
        None => max,
    };
    let frame_index = path
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| parse_indexed_name(n, "label_", ".pgm"))
        .unwrap_or(0);
    PartLabelMap::new(img.width, img.height, parts, frame_index, labels)
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("not a file path: {}", path.display())))?;
    let tmp_name = format!(
        ".{}.tmp{}.{}",
        name.to_string_lossy(),
        std::process::id(),
        TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    );
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexed_names() {
        assert_eq!(parse_indexed_name("frame_000012.pgm", "frame_", ".pgm"), Some(12));
        assert_eq!(parse_indexed_name("frame_1234567.pgm", "frame_", ".pgm"), Some(1234567));
        assert_eq!(parse_indexed_name("frame_12.pgm", "frame_", ".pgm"), None);
        assert_eq!(parse_indexed_name("frame_00001a.pgm", "frame_", ".pgm"), None);
        assert_eq!(parse_indexed_name("frame_000001.png", "frame_", ".pgm"), None);
    }

    #[test]
    fn bbox_clamp() {
        let b = BBox::new(-5, 10, 70, 30).unwrap();
        assert_eq!(b.clamp_to(64, 64), Some(BBox::new(0, 10, 64, 30).unwrap()));
        assert_eq!(BBox::new(80, 0, 90, 5).unwrap().clamp_to(64, 64), None);
        assert_eq!(b.area(), 75 * 20);
    }

    #[test]
    fn frame_rejects_out_of_range() {
        assert!(Frame::new(2, 1, 0, vec![0.0, 1.5]).is_err());
        assert!(Frame::new(2, 1, 0, vec![0.0]).is_err());
        assert!(Frame::new(0, 1, 0, vec![]).is_err());
    }
}
