//! From flow blobs and person boxes to dense part labels.
//!
//! A frame pair becomes a training sample when its moving-pixel fraction
//! passes the gate, the earlier frame has exactly one person detection,
//! and at least one motion blob lies mostly inside that box. Surviving
//! blobs are cropped to the box, the box is cut into `K` horizontal bands
//! (part 1 on top) and every blob pixel takes the id of its band.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::flow::{
    farneback_flow, motion_fraction, motion_gate, motion_mask, FlowParams, GateDecision, GateThresholds,
};
use crate::grouping::{extract_blobs, mean_shift_modes, Blob, MeanShiftParams};
use crate::ingest::{label_file_name, write_label_map, BBox, Detection, Frame};

/// Dense per-pixel part labels, `0` for background and `1..=parts` inside
/// the person.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartLabelMap {
    width: usize,
    height: usize,
    parts: u8,
    frame_index: u32,
    labels: Vec<u8>,
}

impl PartLabelMap {
    pub fn new(width: usize, height: usize, parts: u8, frame_index: u32, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!("label map dimensions {width}x{height}")));
        }
        if labels.len() != width * height {
            return Err(Error::Invalid(format!(
                "label map has {} labels, expected {}",
                labels.len(),
                width * height
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > parts) {
            return Err(Error::Invalid(format!("label {l} exceeds part count {parts}")));
        }
        Ok(Self {
            width,
            height,
            parts,
            frame_index,
            labels,
        })
    }

    pub fn zeros(width: usize, height: usize, parts: u8, frame_index: u32) -> Self {
        Self {
            width,
            height,
            parts,
            frame_index,
            labels: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn parts(&self) -> u8 {
        self.parts
    }

    pub fn frame_index(&self) -> u32 {
        self.frame_index
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Sorted distinct nonzero labels.
    pub fn present_labels(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        self.labels.iter().for_each(|&l| seen[l as usize] = true);
        (1..=255u8).filter(|&l| seen[l as usize]).collect()
    }
}

/// Why a frame pair produced no sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rejection {
    GateLow,
    GateHigh,
    NoPerson,
    MultiPerson,
    NoBlobs,
}

impl Rejection {
    pub fn as_str(self) -> &'static str {
        match self {
            Rejection::GateLow => "gate_low",
            Rejection::GateHigh => "gate_high",
            Rejection::NoPerson => "no_person",
            Rejection::MultiPerson => "multi_person",
            Rejection::NoBlobs => "no_blobs",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rejection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gate_low" => Rejection::GateLow,
            "gate_high" => Rejection::GateHigh,
            "no_person" => Rejection::NoPerson,
            "multi_person" => Rejection::MultiPerson,
            "no_blobs" => Rejection::NoBlobs,
            other => return Err(Error::Invalid(format!("unknown rejection reason {other:?}"))),
        })
    }
}

/// An accepted training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub frame_index: u32,
    pub image_path: PathBuf,
    pub label_path: PathBuf,
    pub detection: Detection,
    pub moving_fraction: f64,
    pub blob_count: usize,
    /// Filled in by hard mining.
    pub error_score: Option<f64>,
}

/// Every knob of label generation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelConfig {
    pub flow: FlowParams,
    pub mean_shift: MeanShiftParams,
    /// Flow magnitude (pixels) a pixel must exceed to count as moving.
    pub eps: f64,
    pub gate: GateThresholds,
    pub parts: u8,
    /// Fraction of a blob's pixels that must fall inside the person box.
    pub min_overlap: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            flow: FlowParams::default(),
            mean_shift: MeanShiftParams::default(),
            eps: 0.5,
            gate: GateThresholds::default(),
            parts: 5,
            min_overlap: 0.5,
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        self.mean_shift.validate()?;
        self.gate.validate()?;
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::Invalid(format!("eps {} must be >= 0", self.eps)));
        }
        if self.parts == 0 {
            return Err(Error::Invalid("part count must be >= 1".into()));
        }
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return Err(Error::Invalid(format!(
                "min_overlap {} must lie in (0, 1]",
                self.min_overlap
            )));
        }
        Ok(())
    }
}

/// The detection, if the frame has exactly one.
pub fn single_person_filter(dets: &[Detection]) -> Option<Detection> {
    match dets {
        [only] => Some(*only),
        _ => None,
    }
}

/// Keeps blobs with at least `min_overlap` of their pixels inside `bbox`,
/// cropped to it.
pub fn filter_person_blobs(blobs: &[Blob], bbox: &BBox, min_overlap: f64) -> Vec<Blob> {
    blobs
        .iter()
        .filter_map(|b| {
            let inside: Vec<(u32, u32)> = b
                .pixels
                .iter()
                .copied()
                .filter(|&(x, y)| bbox.contains(x as i64, y as i64))
                .collect();
            if inside.is_empty() || (inside.len() as f64) < min_overlap * b.size() as f64 {
                return None;
            }
            Some(Blob {
                id: b.id,
                pixels: inside,
                mode: b.mode,
            })
        })
        .collect()
}

/// Cuts `bbox` into `k` horizontal bands, top to bottom. Heights differ by
/// at most one; the `h mod k` taller bands come first.
pub fn partition_bands(bbox: &BBox, k: usize) -> Result<Vec<BBox>> {
    let h = bbox.height() as usize;
    if k == 0 || h < k {
        return Err(Error::contract(format!(
            "cannot cut a box of height {h} into {k} bands"
        )));
    }
    let (base, extra) = (h / k, h % k);
    let mut y = bbox.y0;
    let bands = (0..k)
        .map(|i| {
            let band_h = (base + (i < extra) as usize) as i32;
            let band = BBox {
                y0: y,
                y1: y + band_h,
                ..*bbox
            };
            y += band_h;
            band
        })
        .collect();
    Ok(bands)
}

/// Labels each blob pixel with the 1-based index of the band containing it.
pub fn render_label_map(blobs: &[Blob], bands: &[BBox], width: usize, height: usize, frame_index: u32) -> PartLabelMap {
    let mut map = PartLabelMap::zeros(width, height, bands.len() as u8, frame_index);
    for &(x, y) in blobs.iter().flat_map(|b| b.pixels.iter()) {
        if let Some(i) = bands.iter().position(|band| band.contains(x as i64, y as i64)) {
            if (x as usize) < width && (y as usize) < height {
                map.labels[y as usize * width + x as usize] = (i + 1) as u8;
            }
        }
    }
    map
}

/// Result of running the pipeline on one frame pair, before anything is
/// written.
#[derive(Clone, Debug, PartialEq)]
pub struct PairLabeling {
    pub frame_index: u32,
    pub moving_fraction: f64,
    /// Person blobs that survived pruning (0 if the pipeline stopped earlier).
    pub blob_count: usize,
    /// The lone (clamped) detection of the frame, when there is one.
    pub detection: Option<Detection>,
    pub outcome: std::result::Result<PartLabelMap, Rejection>,
}

/// Runs flow, gating, grouping and band labelling for `(prev, next)`.
/// `dets` may hold detections of any frame; only `prev`'s are used, after
/// clamping to the frame.
pub fn label_pair(prev: &Frame, next: &Frame, dets: &[Detection], cfg: &LabelConfig) -> Result<PairLabeling> {
    cfg.validate()?;
    let (w, h) = (prev.width(), prev.height());
    let frame_dets: Vec<Detection> = dets
        .iter()
        .filter(|d| d.frame_index == prev.index())
        .filter_map(|d| d.bbox.clamp_to(w, h).map(|bbox| Detection { bbox, ..*d }))
        .collect();
    let person = single_person_filter(&frame_dets);

    let field = farneback_flow(prev, next, &cfg.flow)?;
    let fraction = motion_fraction(&field, cfg.eps);
    let mut result = PairLabeling {
        frame_index: prev.index(),
        moving_fraction: fraction,
        blob_count: 0,
        detection: person,
        outcome: Err(Rejection::GateLow),
    };
    match motion_gate(fraction, cfg.gate) {
        GateDecision::TooStill => return Ok(result),
        GateDecision::TooBusy => {
            result.outcome = Err(Rejection::GateHigh);
            return Ok(result);
        }
        GateDecision::Accept => {}
    }
    let person = match (person, frame_dets.len()) {
        (Some(p), _) if p.bbox.height() as usize >= cfg.parts as usize => p,
        (_, n) if n > 1 => {
            result.outcome = Err(Rejection::MultiPerson);
            return Ok(result);
        }
        _ => {
            result.outcome = Err(Rejection::NoPerson);
            return Ok(result);
        }
    };

    let mask = motion_mask(&field, cfg.eps);
    let modes = mean_shift_modes(&field, &mask, &cfg.mean_shift)?;
    let blobs = extract_blobs(&modes, &cfg.mean_shift);
    let kept = filter_person_blobs(&blobs, &person.bbox, cfg.min_overlap);
    result.blob_count = kept.len();
    if kept.is_empty() {
        result.outcome = Err(Rejection::NoBlobs);
        return Ok(result);
    }
    let bands = partition_bands(&person.bbox, cfg.parts as usize)?;
    result.outcome = Ok(render_label_map(&kept, &bands, w, h, prev.index()));
    Ok(result)
}

/// Either a written sample or the reason there is none.
#[derive(Clone, Debug, PartialEq)]
pub enum SampleOutcome {
    Accepted(SampleRecord),
    Rejected {
        frame_index: u32,
        reason: Rejection,
        moving_fraction: f64,
        blob_count: usize,
        detection: Option<Detection>,
    },
}

/// [`label_pair`] plus writing the label map as `label_%06d.pgm` in
/// `labels_dir` on acceptance.
pub fn generate_sample(
    prev: &Frame,
    next: &Frame,
    dets: &[Detection],
    cfg: &LabelConfig,
    image_path: &Path,
    labels_dir: &Path,
) -> Result<SampleOutcome> {
    let labeling = label_pair(prev, next, dets, cfg)?;
    Ok(match labeling.outcome {
        Ok(map) => {
            let label_path = labels_dir.join(label_file_name(labeling.frame_index));
            write_label_map(&map, &label_path)?;
            SampleOutcome::Accepted(SampleRecord {
                frame_index: labeling.frame_index,
                image_path: image_path.to_path_buf(),
                label_path,
                detection: labeling.detection.expect("accepted pairs have a person"),
                moving_fraction: labeling.moving_fraction,
                blob_count: labeling.blob_count,
                error_score: None,
            })
        }
        Err(reason) => SampleOutcome::Rejected {
            frame_index: labeling.frame_index,
            reason,
            moving_fraction: labeling.moving_fraction,
            blob_count: labeling.blob_count,
            detection: labeling.detection,
        },
    })
}

/// One line of the sample manifest:
/// `frame_index image_path label_path x0 y0 x1 y1 status moving_fraction blob_count`,
/// with `-` for a missing label path or box and `ok` as the accepted status.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub frame_index: u32,
    pub image_path: PathBuf,
    pub label_path: Option<PathBuf>,
    pub bbox: Option<BBox>,
    pub status: std::result::Result<(), Rejection>,
    pub moving_fraction: f64,
    pub blob_count: usize,
}

impl ManifestEntry {
    pub fn from_outcome(outcome: &SampleOutcome, image_path: &Path) -> Self {
        match outcome {
            SampleOutcome::Accepted(r) => Self {
                frame_index: r.frame_index,
                image_path: r.image_path.clone(),
                label_path: Some(r.label_path.clone()),
                bbox: Some(r.detection.bbox),
                status: Ok(()),
                moving_fraction: r.moving_fraction,
                blob_count: r.blob_count,
            },
            SampleOutcome::Rejected {
                frame_index,
                reason,
                moving_fraction,
                blob_count,
                detection,
            } => Self {
                frame_index: *frame_index,
                image_path: image_path.to_path_buf(),
                label_path: None,
                bbox: detection.map(|d| d.bbox),
                status: Err(*reason),
                moving_fraction: *moving_fraction,
                blob_count: *blob_count,
            },
        }
    }

    /// Accepted entries as sample records. The manifest does not keep the
    /// detector score, so it comes back as 0.
    pub fn to_record(&self) -> Option<SampleRecord> {
        match (&self.status, &self.label_path, self.bbox) {
            (Ok(()), Some(label_path), Some(bbox)) => Some(SampleRecord {
                frame_index: self.frame_index,
                image_path: self.image_path.clone(),
                label_path: label_path.clone(),
                detection: Detection {
                    frame_index: self.frame_index,
                    bbox,
                    score: 0.0,
                },
                moving_fraction: self.moving_fraction,
                blob_count: self.blob_count,
                error_score: None,
            }),
            _ => None,
        }
    }
}

impl fmt::Display for ManifestEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.frame_index, self.image_path.display())?;
        match &self.label_path {
            Some(p) => write!(f, "{} ", p.display())?,
            None => f.write_str("- ")?,
        }
        match self.bbox {
            Some(b) => write!(f, "{} {} {} {} ", b.x0, b.y0, b.x1, b.y1)?,
            None => f.write_str("- - - - ")?,
        }
        let status = match self.status {
            Ok(()) => "ok",
            Err(r) => r.as_str(),
        };
        write!(f, "{status} {:.6} {}", self.moving_fraction, self.blob_count)
    }
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        writeln!(s, "{e}").unwrap();
    }
    s
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 10 {
            return Err(perr(format!("expected 10 fields, found {}", f.len())));
        }
        let num = |k: usize, name: &str| -> Result<i32> {
            f[k].parse()
                .map_err(|_| perr(format!("{name}: cannot parse {:?}", f[k])))
        };
        let frame_index = f[0]
            .parse()
            .map_err(|_| perr(format!("frame_index: cannot parse {:?}", f[0])))?;
        let label_path = (f[2] != "-").then(|| PathBuf::from(f[2]));
        let bbox = if f[3..7].iter().all(|t| *t == "-") {
            None
        } else {
            let b = BBox::new(num(3, "x0")?, num(4, "y0")?, num(5, "x1")?, num(6, "y1")?).map_err(|e| {
                Error::Validation {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: e.to_string(),
                }
            })?;
            Some(b)
        };
        let status = match f[7] {
            "ok" => Ok(()),
            other => Err(other.parse::<Rejection>().map_err(|e| perr(e.to_string()))?),
        };
        let moving_fraction = f[8]
            .parse()
            .map_err(|_| perr(format!("moving_fraction: cannot parse {:?}", f[8])))?;
        let blob_count = f[9]
            .parse()
            .map_err(|_| perr(format!("blob_count: cannot parse {:?}", f[9])))?;
        out.push(ManifestEntry {
            frame_index,
            image_path: PathBuf::from(f[1]),
            label_path,
            bbox,
            status,
            moving_fraction,
            blob_count,
        });
    }
    Ok(out)
}
