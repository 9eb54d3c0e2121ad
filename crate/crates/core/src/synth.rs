//! Deterministic synthetic scenes with exact ground truth.
//!
//! A textured figure translates over a constant background. The texture is
//! a seeded sum of oriented sinusoids evaluated in figure-local coordinates,
//! so it moves rigidly with the figure; intensities are quantized to 8 bits
//! at render time, which makes a PGM round trip lossless.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::ingest::{BBox, Detection, Frame, Joint, Keypoints};
use crate::supervise::PartLabelMap;

/// Parts the ground-truth masks are cut into.
pub const SYNTH_PARTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureShape {
    Rectangle,
    /// Head, arms, torso and two legs inside the figure rectangle.
    StickFigure,
}

impl FromStr for FigureShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangle" => Ok(FigureShape::Rectangle),
            "stick" => Ok(FigureShape::StickFigure),
            other => Err(Error::Invalid(format!("unknown figure shape {other:?}"))),
        }
    }
}

impl FigureShape {
    pub fn name(self) -> &'static str {
        match self {
            FigureShape::Rectangle => "rectangle",
            FigureShape::StickFigure => "stick",
        }
    }

    /// Whether local pixel `(x, y)` of a `w x h` figure is covered.
    fn covers(self, x: i64, y: i64, w: i64, h: i64) -> bool {
        if x < 0 || y < 0 || x >= w || y >= h {
            return false;
        }
        match self {
            FigureShape::Rectangle => true,
            FigureShape::StickFigure => {
                let (head_end, torso_end) = (h / 5, 3 * h / 5);
                let arms_start = h / 5 + h / 20;
                let arms_end = arms_start + (h / 10).max(1);
                let core = x >= w / 3 && x < w - w / 3;
                let head = y < head_end && core;
                let torso = y >= head_end && y < torso_end && core;
                let arms = y >= arms_start && y < arms_end;
                let left_leg = 20 * x >= 3 * w && 5 * x < 2 * w;
                let right_leg = 5 * x >= 3 * w && 20 * x < 17 * w;
                let legs = y >= torso_end && (left_leg || right_leg);
                head || torso || arms || legs
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub shape: FigureShape,
    /// Top-left corner of the figure rectangle in frame 0.
    pub figure_x: i64,
    pub figure_y: i64,
    pub figure_width: usize,
    pub figure_height: usize,
    /// Whole pixels per frame.
    pub velocity: (i64, i64),
    pub frames: usize,
    pub texture_seed: u64,
    pub background: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            shape: FigureShape::Rectangle,
            figure_x: 24,
            figure_y: 20,
            figure_width: 48,
            figure_height: 88,
            velocity: (2, 0),
            frames: 8,
            texture_seed: 1,
            background: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.frames == 0 {
            return Err(Error::contract("scene needs positive size and frame count"));
        }
        if self.figure_width == 0 || self.figure_height < SYNTH_PARTS {
            return Err(Error::contract(format!(
                "figure {}x{} too small for {SYNTH_PARTS} parts",
                self.figure_width, self.figure_height
            )));
        }
        if !(0.0..=1.0).contains(&self.background) {
            return Err(Error::contract(format!(
                "background {} outside [0, 1]",
                self.background
            )));
        }
        for k in 0..self.frames as i64 {
            let (x, y) = self.origin(k);
            if x < 0
                || y < 0
                || x + self.figure_width as i64 > self.width as i64
                || y + self.figure_height as i64 > self.height as i64
            {
                return Err(Error::contract(format!("figure leaves the frame at frame {k}")));
            }
        }
        Ok(())
    }

    fn origin(&self, k: i64) -> (i64, i64) {
        (self.figure_x + k * self.velocity.0, self.figure_y + k * self.velocity.1)
    }

    pub fn from_key_values(mut kv: KeyValues) -> Result<Self> {
        let mut c = Self::default();
        kv.take_into("width", &mut c.width)?;
        kv.take_into("height", &mut c.height)?;
        kv.take_into("figure", &mut c.shape)?;
        kv.take_into("figure_x", &mut c.figure_x)?;
        kv.take_into("figure_y", &mut c.figure_y)?;
        kv.take_into("figure_width", &mut c.figure_width)?;
        kv.take_into("figure_height", &mut c.figure_height)?;
        kv.take_into("velocity_u", &mut c.velocity.0)?;
        kv.take_into("velocity_v", &mut c.velocity.1)?;
        kv.take_into("frames", &mut c.frames)?;
        kv.take_into("texture_seed", &mut c.texture_seed)?;
        kv.take_into("background", &mut c.background)?;
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_key_values(KeyValues::load(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("width", self.width.to_string());
        kv("height", self.height.to_string());
        kv("figure", self.shape.name().to_string());
        kv("figure_x", self.figure_x.to_string());
        kv("figure_y", self.figure_y.to_string());
        kv("figure_width", self.figure_width.to_string());
        kv("figure_height", self.figure_height.to_string());
        kv("velocity_u", self.velocity.0.to_string());
        kv("velocity_v", self.velocity.1.to_string());
        kv("frames", self.frames.to_string());
        kv("texture_seed", self.texture_seed.to_string());
        kv("background", self.background.to_string());
        s
    }
}

/// SplitMix64.
struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) from the top 53 bits.
    fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Band-limited texture: six oriented sinusoids with wavelengths in
/// [8, 20) px, normalized to [-1, 1].
#[derive(Clone, Debug)]
pub struct Texture {
    waves: Vec<[f64; 4]>,
    norm: f64,
}

impl Texture {
    pub fn new(seed: u64) -> Self {
        let mut rng = SplitMix64(seed);
        let waves: Vec<[f64; 4]> = (0..6)
            .map(|_| {
                let theta = PI * rng.next_f64();
                let wavelength = 8.0 + 12.0 * rng.next_f64();
                let k = 2.0 * PI / wavelength;
                let phase = 2.0 * PI * rng.next_f64();
                let amp = 0.5 + 0.5 * rng.next_f64();
                [k * theta.cos(), k * theta.sin(), phase, amp]
            })
            .collect();
        let norm = waves.iter().map(|w| w[3]).sum();
        Self { waves, norm }
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        self.waves
            .iter()
            .map(|&[kx, ky, phase, amp]| amp * (kx * x + ky * y + phase).sin())
            .sum::<f64>()
            / self.norm
    }
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// A rendered scene and its ground truth. `flows[k]` is the exact flow from
/// frame `k` to `k + 1`.
#[derive(Clone, Debug)]
pub struct SynthScene {
    pub frames: Vec<Frame>,
    pub flows: Vec<FlowField>,
    pub boxes: Vec<BBox>,
    pub part_masks: Vec<PartLabelMap>,
    pub keypoints: Vec<Keypoints>,
}

impl SynthScene {
    /// One detection per frame: the tight figure box, score 1.
    pub fn detections(&self) -> Vec<Detection> {
        self.boxes
            .iter()
            .enumerate()
            .map(|(k, &bbox)| Detection {
                frame_index: k as u32,
                bbox,
                score: 1.0,
            })
            .collect()
    }
}

pub fn render_sequence(cfg: &SynthConfig) -> Result<SynthScene> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let (fw, fh) = (cfg.figure_width as i64, cfg.figure_height as i64);
    let texture = Texture::new(cfg.texture_seed);
    // texture of the figure in its own coordinates
    let local: Vec<Option<f64>> = (0..fh)
        .flat_map(|y| (0..fw).map(move |x| (x, y)))
        .map(|(x, y)| {
            cfg.shape
                .covers(x, y, fw, fh)
                .then(|| quantize(0.75 + 0.2 * texture.sample(x as f64, y as f64)))
        })
        .collect();
    let background = quantize(cfg.background);

    let mut scene = SynthScene {
        frames: Vec::with_capacity(cfg.frames),
        flows: Vec::new(),
        boxes: Vec::new(),
        part_masks: Vec::new(),
        keypoints: Vec::new(),
    };
    for k in 0..cfg.frames {
        let (ox, oy) = cfg.origin(k as i64);
        let mut luma = vec![background; w * h];
        let mut mask = vec![false; w * h];
        for ly in 0..fh {
            for lx in 0..fw {
                if let Some(v) = local[(ly * fw + lx) as usize] {
                    let i = (oy + ly) as usize * w + (ox + lx) as usize;
                    luma[i] = v;
                    mask[i] = true;
                }
            }
        }
        let frame = Frame::new(w, h, k as u32, luma)?;
        let bbox = tight_box(&mask, w).expect("figure has pixels");
        let parts = slice_masks(&mask, w, h, &bbox, k as u32);
        scene.keypoints.push(slice_keypoints(&parts, &bbox, k as u32));
        if k + 1 < cfg.frames {
            let v = [cfg.velocity.0 as f32, cfg.velocity.1 as f32];
            let vectors = mask.iter().map(|&m| if m { v } else { [0.0; 2] }).collect();
            scene.flows.push(FlowField::new(w, h, vectors)?);
        }
        scene.frames.push(frame);
        scene.boxes.push(bbox);
        scene.part_masks.push(parts);
    }
    Ok(scene)
}

fn tight_box(mask: &[bool], w: usize) -> Option<BBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (x, y) = ((i % w) as i32, (i / w) as i32);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x + 1);
        y1 = y1.max(y + 1);
    }
    BBox::new(x0, y0, x1, y1).ok()
}

/// Figure pixels labelled by horizontal slice of the box (taller slices on
/// top when the height does not divide evenly).
fn slice_masks(mask: &[bool], w: usize, h: usize, bbox: &BBox, frame_index: u32) -> PartLabelMap {
    let bh = bbox.height() as usize;
    let (base, extra) = (bh / SYNTH_PARTS, bh % SYNTH_PARTS);
    let mut row_part = vec![0u8; h];
    let mut y = bbox.y0 as usize;
    for part in 0..SYNTH_PARTS {
        let rows = base + (part < extra) as usize;
        for r in &mut row_part[y..y + rows] {
            *r = part as u8 + 1;
        }
        y += rows;
    }
    let labels = mask
        .iter()
        .enumerate()
        .map(|(i, &m)| if m { row_part[i / w] } else { 0 })
        .collect();
    PartLabelMap::new(w, h, SYNTH_PARTS as u8, frame_index, labels).expect("valid labels")
}

/// Nearest pixel labelled `part` to `(x, y)`, ties in raster order,
/// optionally restricted to one row.
fn nearest_in_part(parts: &PartLabelMap, part: u8, x: f64, y: f64, row: Option<usize>) -> (f64, f64) {
    let w = parts.width();
    let mut best: Option<(f64, (f64, f64))> = None;
    for (i, &l) in parts.labels().iter().enumerate() {
        let (px, py) = ((i % w) as f64, (i / w) as f64);
        if l != part || row.is_some_and(|r| r != i / w) {
            continue;
        }
        let d = (px - x).powi(2) + (py - y).powi(2);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, (px, py)));
        }
    }
    best.expect("part has pixels").1
}

/// Slice centroids for the five upper joints (snapped onto the slice when
/// the centroid falls outside it) and the bottom row of the last slice for
/// the ankles.
fn slice_keypoints(parts: &PartLabelMap, bbox: &BBox, frame_index: u32) -> Keypoints {
    let joints_by_part = [
        Joint::Face,
        Joint::ShoulderMid,
        Joint::Belly,
        Joint::HipMid,
        Joint::KneeMid,
    ];
    let covers = |part: u8, x: f64, y: f64| {
        let (xi, yi) = (x.round(), y.round());
        xi >= 0.0
            && yi >= 0.0
            && (xi as usize) < parts.width()
            && (yi as usize) < parts.height()
            && parts.get(xi as usize, yi as usize) == part
    };
    let mut joints = BTreeMap::new();
    let mut last_centroid = (0.0, 0.0);
    for (k, joint) in joints_by_part.into_iter().enumerate() {
        let part = k as u8 + 1;
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (i, _) in parts.labels().iter().enumerate().filter(|(_, &l)| l == part) {
            sx += (i % parts.width()) as f64;
            sy += (i / parts.width()) as f64;
            n += 1;
        }
        let c = (sx / n as f64, sy / n as f64);
        let kp = if covers(part, c.0, c.1) {
            c
        } else {
            nearest_in_part(parts, part, c.0, c.1, None)
        };
        joints.insert(joint, kp);
        last_centroid = c;
    }
    let bottom = (bbox.y1 - 1) as f64;
    let ankle = if covers(SYNTH_PARTS as u8, last_centroid.0, bottom) {
        (last_centroid.0, bottom)
    } else {
        nearest_in_part(parts, SYNTH_PARTS as u8, last_centroid.0, bottom, Some(bottom as usize))
    };
    joints.insert(Joint::AnkleMid, ankle);
    Keypoints { frame_index, joints }
}

/// Two full-frame textured frames where the second is the first moved by
/// `shift` pixels; the ground-truth flow is `shift` everywhere.
pub fn textured_pair(width: usize, height: usize, shift: (f64, f64), seed: u64) -> Result<(Frame, Frame)> {
    let texture = Texture::new(seed);
    let render = |index: u32, dx: f64, dy: f64| {
        let luma = (0..width * height)
            .map(|i| {
                let (x, y) = ((i % width) as f64 - dx, (i / width) as f64 - dy);
                quantize(0.5 + 0.4 * texture.sample(x, y))
            })
            .collect();
        Frame::new(width, height, index, luma)
    };
    Ok((render(0, 0.0, 0.0)?, render(1, shift.0, shift.1)?))
}
