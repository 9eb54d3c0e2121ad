//! Motion blobs: mean-shift mode seeking over joint `(x, y, u, v)`
//! features, single-linkage mode merging and 4-connected splitting.
//!
//! Features are normalized as `(x/hs, y/hs, u/hr, v/hr)` and the kernel is
//! flat: a point is a neighbour of the current estimate iff its squared
//! normalized distance is `<= 1`. Neighbour sums always run in ascending
//! raster order, so results do not depend on scheduling.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowField;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanShiftParams {
    /// Spatial bandwidth `hs`, in pixels.
    pub spatial_bandwidth: f64,
    /// Range bandwidth `hr`, in flow units.
    pub range_bandwidth: f64,
    pub max_iterations: usize,
    /// Stop once a step in normalized feature space is shorter than this.
    pub convergence_tol: f64,
    /// Modes closer than this (normalized) end up in the same cluster.
    pub merge_radius: f64,
    pub min_blob_size: usize,
}

impl Default for MeanShiftParams {
    fn default() -> Self {
        Self {
            spatial_bandwidth: 8.0,
            range_bandwidth: 1.5,
            max_iterations: 50,
            convergence_tol: 1e-3,
            merge_radius: 0.5,
            min_blob_size: 25,
        }
    }
}

impl MeanShiftParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.spatial_bandwidth)
            && positive(self.range_bandwidth)
            && positive(self.convergence_tol)
            && positive(self.merge_radius))
            || self.max_iterations == 0
            || self.min_blob_size == 0
        {
            return Err(Error::Invalid(format!(
                "mean-shift parameters must all be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Converged mode of every masked pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelModes {
    pub width: usize,
    pub height: usize,
    pub spatial_bandwidth: f64,
    pub range_bandwidth: f64,
    /// Raster indices of the masked pixels, ascending.
    pub pixels: Vec<usize>,
    /// Converged modes in normalized feature space, parallel to `pixels`.
    pub normalized: Vec<[f64; 4]>,
}

impl PixelModes {
    /// Mode of the `i`-th masked pixel in `(x, y, u, v)` units.
    pub fn mode(&self, i: usize) -> [f64; 4] {
        let m = &self.normalized[i];
        let (hs, hr) = (self.spatial_bandwidth, self.range_bandwidth);
        [m[0] * hs, m[1] * hs, m[2] * hr, m[3] * hr]
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Normalized feature of pixel `(x, y)` with flow `(u, v)`.
#[inline]
pub fn feature(x: usize, y: usize, flow: [f32; 2], hs: f64, hr: f64) -> [f64; 4] {
    [x as f64 / hs, y as f64 / hs, flow[0] as f64 / hr, flow[1] as f64 / hr]
}

#[inline]
fn dist2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + d[3] * d[3]
}

/// Point set bucketed on a unit grid over the two spatial coordinates.
struct SpatialGrid {
    cell: f64,
    cols: i64,
    rows: i64,
    buckets: Vec<Vec<usize>>,
}

impl SpatialGrid {
    fn new(points: &[[f64; 4]], cell: f64) -> Self {
        let max_x = points.iter().map(|p| p[0]).fold(0.0, f64::max);
        let max_y = points.iter().map(|p| p[1]).fold(0.0, f64::max);
        let cols = (max_x / cell).floor() as i64 + 1;
        let rows = (max_y / cell).floor() as i64 + 1;
        let mut buckets = vec![Vec::new(); (cols * rows) as usize];
        for (i, p) in points.iter().enumerate() {
            let cx = ((p[0] / cell).floor() as i64).clamp(0, cols - 1);
            let cy = ((p[1] / cell).floor() as i64).clamp(0, rows - 1);
            buckets[(cy * cols + cx) as usize].push(i);
        }
        Self {
            cell,
            cols,
            rows,
            buckets,
        }
    }

    /// Indices of every point whose spatial cell could hold a point within
    /// `cell` of `(x, y)`, ascending.
    fn candidates(&self, x: f64, y: f64, out: &mut Vec<usize>) {
        out.clear();
        let span = |v: f64, n: i64| {
            let lo = (((v - self.cell) / self.cell).floor() as i64).max(0);
            let hi = (((v + self.cell) / self.cell).floor() as i64).min(n - 1);
            lo..=hi
        };
        for cy in span(y, self.rows) {
            for cx in span(x, self.cols) {
                out.extend_from_slice(&self.buckets[(cy * self.cols + cx) as usize]);
            }
        }
        out.sort_unstable();
    }
}

/// Flat-kernel mean shift over a fixed set of normalized features.
pub struct ModeSeeker<'a> {
    points: &'a [[f64; 4]],
    grid: SpatialGrid,
    max_iterations: usize,
    tol: f64,
}

impl<'a> ModeSeeker<'a> {
    pub fn new(points: &'a [[f64; 4]], params: &MeanShiftParams) -> Self {
        Self {
            points,
            grid: SpatialGrid::new(points, 1.0),
            max_iterations: params.max_iterations,
            tol: params.convergence_tol,
        }
    }

    fn neighbourhood_mean(&self, m: &[f64; 4], scratch: &mut Vec<usize>) -> Option<[f64; 4]> {
        self.grid.candidates(m[0], m[1], scratch);
        let mut sum = [0.0; 4];
        let mut count = 0usize;
        for &j in scratch.iter() {
            let p = &self.points[j];
            if dist2(p, m) <= 1.0 {
                for k in 0..4 {
                    sum[k] += p[k];
                }
                count += 1;
            }
        }
        (count > 0).then(|| sum.map(|s| s / count as f64))
    }

    /// Iterates from `seed` until the next step would be shorter than the
    /// tolerance, returning the point that step starts from.
    pub fn seek(&self, seed: [f64; 4]) -> [f64; 4] {
        let mut scratch = Vec::new();
        let mut m = seed;
        for _ in 0..self.max_iterations {
            let Some(next) = self.neighbourhood_mean(&m, &mut scratch) else {
                break;
            };
            if dist2(&next, &m).sqrt() < self.tol {
                break;
            }
            m = next;
        }
        m
    }
}

/// Runs mean shift from every masked pixel's own feature.
pub fn mean_shift_modes(field: &FlowField, mask: &[bool], params: &MeanShiftParams) -> Result<PixelModes> {
    params.validate()?;
    let (w, h) = (field.width(), field.height());
    if mask.len() != w * h {
        return Err(Error::contract(format!(
            "mask has {} entries for a {w}x{h} field",
            mask.len()
        )));
    }
    let pixels: Vec<usize> = (0..w * h).filter(|&i| mask[i]).collect();
    if pixels.is_empty() {
        return Err(Error::contract("mean shift needs at least one masked pixel"));
    }
    let (hs, hr) = (params.spatial_bandwidth, params.range_bandwidth);
    let points: Vec<[f64; 4]> = pixels
        .iter()
        .map(|&i| feature(i % w, i / w, field.vectors()[i], hs, hr))
        .collect();
    let seeker = ModeSeeker::new(&points, params);
    let normalized = points.par_iter().map(|&p| seeker.seek(p)).collect();
    Ok(PixelModes {
        width: w,
        height: h,
        spatial_bandwidth: hs,
        range_bandwidth: hr,
        pixels,
        normalized,
    })
}

/// Connected group of moving pixels sharing a merged mean-shift mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub id: usize,
    /// `(x, y)` coordinates in raster order.
    pub pixels: Vec<(u32, u32)>,
    /// Mean converged mode of the members, `(x, y, u, v)`.
    pub mode: [f64; 4],
}

impl Blob {
    pub fn size(&self) -> usize {
        self.pixels.len()
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins; keeps roots independent of union order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Cluster id per masked pixel (parallel to `modes.pixels`).
fn merge_modes(modes: &PixelModes, radius: f64) -> Vec<usize> {
    let n = modes.len();
    let mut sets = DisjointSet::new(n);
    let grid = SpatialGrid::new(&modes.normalized, radius);
    let r2 = radius * radius;
    let mut scratch = Vec::new();
    for i in 0..n {
        let m = &modes.normalized[i];
        grid.candidates(m[0], m[1], &mut scratch);
        for &j in scratch.iter().filter(|&&j| j > i) {
            if dist2(m, &modes.normalized[j]) <= r2 {
                sets.union(i, j);
            }
        }
    }
    (0..n).map(|i| sets.find(i)).collect()
}

/// Merges modes, splits each cluster into 4-connected components and keeps
/// components of at least `min_blob_size` pixels. Ids follow the raster
/// order of each blob's first pixel.
pub fn extract_blobs(modes: &PixelModes, params: &MeanShiftParams) -> Vec<Blob> {
    if modes.is_empty() {
        return Vec::new();
    }
    let (w, h) = (modes.width, modes.height);
    let cluster_of = merge_modes(modes, params.merge_radius);
    const NONE: usize = usize::MAX;
    // raster index -> position in `modes.pixels`
    let mut slot = vec![NONE; w * h];
    for (k, &p) in modes.pixels.iter().enumerate() {
        slot[p] = k;
    }
    let mut visited = vec![false; w * h];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for &start in &modes.pixels {
        if visited[start] {
            continue;
        }
        let cluster = cluster_of[slot[start]];
        let mut members = vec![start];
        visited[start] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if !visited[q] && slot[q] != NONE && cluster_of[slot[q]] == cluster {
                    visited[q] = true;
                    members.push(q);
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        if members.len() < params.min_blob_size {
            continue;
        }
        members.sort_unstable();
        let mut sum = [0.0; 4];
        for &p in &members {
            let m = modes.mode(slot[p]);
            for k in 0..4 {
                sum[k] += m[k];
            }
        }
        let n = members.len() as f64;
        blobs.push(Blob {
            id: blobs.len(),
            pixels: members.iter().map(|&p| ((p % w) as u32, (p / w) as u32)).collect(),
            mode: sum.map(|s| s / n),
        });
    }
    blobs
}

/// Text form: per blob a header line `id size x y u v`, then a line
/// `runs y x len y x len ...` of horizontal runs in raster order.
pub fn format_blobs(blobs: &[Blob]) -> String {
    let mut s = String::new();
    for b in blobs {
        let [mx, my, mu, mv] = b.mode;
        writeln!(s, "{} {} {mx} {my} {mu} {mv}", b.id, b.size()).unwrap();
        let mut runs: Vec<(u32, u32, u32)> = Vec::new();
        for &(x, y) in &b.pixels {
            match runs.last_mut() {
                Some((ry, rx, len)) if *ry == y && *rx + *len == x => *len += 1,
                _ => runs.push((y, x, 1)),
            }
        }
        write!(s, "{}", runs.len()).unwrap();
        for (y, x, len) in runs {
            write!(s, " {y} {x} {len}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn parse_blobs(text: &str) -> Result<Vec<Blob>> {
    let bad = |line: usize, msg: &str| Error::Invalid(format!("blob text line {line}: {msg}"));
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if !lines.len().is_multiple_of(2) {
        return Err(bad(lines.len(), "header without run line"));
    }
    let mut blobs = Vec::new();
    for (i, pair) in lines.chunks(2).enumerate() {
        let head: Vec<&str> = pair[0].split_whitespace().collect();
        if head.len() != 6 {
            return Err(bad(2 * i + 1, "expected `id size x y u v`"));
        }
        let id: usize = head[0].parse().map_err(|_| bad(2 * i + 1, "id"))?;
        let size: usize = head[1].parse().map_err(|_| bad(2 * i + 1, "size"))?;
        let mut mode = [0.0; 4];
        for k in 0..4 {
            mode[k] = head[2 + k].parse().map_err(|_| bad(2 * i + 1, "mode"))?;
        }
        let nums: Vec<u32> = pair[1]
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(2 * i + 2, "run field")))
            .collect::<Result<_>>()?;
        let Some((&count, runs)) = nums.split_first() else {
            return Err(bad(2 * i + 2, "empty run line"));
        };
        if runs.len() != 3 * count as usize {
            return Err(bad(2 * i + 2, "run count mismatch"));
        }
        let mut pixels = Vec::with_capacity(size);
        for r in runs.chunks(3) {
            pixels.extend((r[1]..r[1] + r[2]).map(|x| (x, r[0])));
        }
        if pixels.len() != size {
            return Err(bad(2 * i + 1, "size does not match runs"));
        }
        blobs.push(Blob { id, pixels, mode });
    }
    Ok(blobs)
}
