//! Independent references shared by the test suites: brute-force solves
//! that the optimized code must agree with.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::VecDeque;

use flowpose::flow::polynomial_expansion;
use flowpose::grouping::{feature, Blob, MeanShiftParams};
use flowpose::ingest::Frame;
use flowpose::FlowField;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Gaussian elimination with partial pivoting.
pub fn solve6(mut m: [[f64; 6]; 6], mut rhs: [f64; 6]) -> [f64; 6] {
    for col in 0..6 {
        let pivot = (col..6)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..6 {
            let f = m[row][col] / m[col][col];
            for k in col..6 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 6];
    for row in (0..6).rev() {
        let s: f64 = (row + 1..6).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / m[row][row];
    }
    x
}

/// Direct weighted least squares of `{1, x, y, x^2, y^2, xy}` at one pixel.
/// Returns `[c, b1, b2, a11, a22, a12]`.
pub fn direct_fit(frame: &Frame, px: usize, py: usize, n: usize, sigma: f64) -> [f64; 6] {
    let r = (n / 2) as i64;
    let mut normal = [[0.0; 6]; 6];
    let mut rhs = [0.0; 6];
    for dy in -r..=r {
        for dx in -r..=r {
            let sx = (px as i64 + dx).clamp(0, frame.width() as i64 - 1) as usize;
            let sy = (py as i64 + dy).clamp(0, frame.height() as i64 - 1) as usize;
            let f = frame.get(sx, sy);
            let (x, y) = (dx as f64, dy as f64);
            let wgt = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
            let basis = [1.0, x, y, x * x, y * y, x * y];
            for i in 0..6 {
                rhs[i] += wgt * basis[i] * f;
                for j in 0..6 {
                    normal[i][j] += wgt * basis[i] * basis[j];
                }
            }
        }
    }
    let s = solve6(normal, rhs);
    [s[0], s[1], s[2], s[3], s[4], s[5] / 2.0]
}

pub fn max_expansion_error(frame: &Frame, n: usize, sigma: f64) -> f64 {
    let e = polynomial_expansion(frame, n, sigma).unwrap();
    let mut worst: f64 = 0.0;
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            let d = direct_fit(frame, x, y, n, sigma);
            let p = e.get(x, y);
            let got = [p.c, p.b1, p.b2, p.a11, p.a22, p.a12];
            for k in 0..6 {
                worst = worst.max((got[k] - d[k]).abs());
            }
        }
    }
    worst
}

/// RMSE of the flow error over pixels at least `margin` from the border.
pub fn interior_rmse(
    frame_w: usize,
    frame_h: usize,
    flow: &flowpose::FlowField,
    truth: (f64, f64),
    margin: usize,
) -> f64 {
    let (mut se, mut n) = (0.0, 0usize);
    for y in margin..frame_h - margin {
        for x in margin..frame_w - margin {
            let [u, v] = flow.get(x, y);
            se += (u as f64 - truth.0).powi(2) + (v as f64 - truth.1).powi(2);
            n += 1;
        }
    }
    (se / n as f64).sqrt()
}

pub fn d2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + d[3] * d[3]
}

/// Reference partition: blobs as raster-ordered pixel lists, in id order.
pub fn naive_blobs(field: &FlowField, mask: &[bool], p: &MeanShiftParams) -> Vec<Vec<(u32, u32)>> {
    let w = field.width();
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let pts: Vec<[f64; 4]> = idx
        .iter()
        .map(|&i| feature(i % w, i / w, field.vectors()[i], p.spatial_bandwidth, p.range_bandwidth))
        .collect();
    let modes: Vec<[f64; 4]> = pts
        .iter()
        .map(|&seed| {
            let mut m = seed;
            for _ in 0..p.max_iterations {
                let mut sum = [0.0; 4];
                let mut n = 0usize;
                for q in &pts {
                    if d2(q, &m) <= 1.0 {
                        for k in 0..4 {
                            sum[k] += q[k];
                        }
                        n += 1;
                    }
                }
                let next = sum.map(|s| s / n as f64);
                if d2(&next, &m).sqrt() < p.convergence_tol {
                    break;
                }
                m = next;
            }
            m
        })
        .collect();
    // clusters: connected components of the "modes within merge radius" graph
    let n = pts.len();
    let mut cluster = vec![usize::MAX; n];
    let r2 = p.merge_radius * p.merge_radius;
    for s in 0..n {
        if cluster[s] != usize::MAX {
            continue;
        }
        cluster[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if cluster[j] == usize::MAX && d2(&modes[i], &modes[j]) <= r2 {
                    cluster[j] = s;
                    queue.push_back(j);
                }
            }
        }
    }
    let mut cluster_at = vec![usize::MAX; mask.len()];
    for (k, &i) in idx.iter().enumerate() {
        cluster_at[i] = cluster[k];
    }
    let h = field.height();
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for &start in &idx {
        if seen[start] {
            continue;
        }
        let c = cluster_at[start];
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y) = (i % w, i / w);
            let mut nbrs = Vec::new();
            if x > 0 {
                nbrs.push(i - 1);
            }
            if x + 1 < w {
                nbrs.push(i + 1);
            }
            if y > 0 {
                nbrs.push(i - w);
            }
            if y + 1 < h {
                nbrs.push(i + w);
            }
            for j in nbrs {
                if !seen[j] && cluster_at[j] == c {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if comp.len() >= p.min_blob_size {
            comp.sort();
            out.push(comp.iter().map(|&i| ((i % w) as u32, (i / w) as u32)).collect());
        }
    }
    out
}

pub fn partition(blobs: &[Blob]) -> Vec<Vec<(u32, u32)>> {
    blobs.iter().map(|b| b.pixels.clone()).collect()
}

/// Piecewise-constant flow over a few random rectangles plus noise, with a
/// random mask.
pub fn random_field(rng: &mut ChaCha8Rng) -> (FlowField, Vec<bool>) {
    let w = rng.gen_range(4..=20);
    let h = rng.gen_range(4..=20);
    let mut vecs = vec![[0.0f32; 2]; w * h];
    for _ in 0..rng.gen_range(1..4) {
        let (x0, y0) = (rng.gen_range(0..w), rng.gen_range(0..h));
        let (x1, y1) = (rng.gen_range(x0 + 1..=w), rng.gen_range(y0 + 1..=h));
        let v = [rng.gen_range(-4.0..4.0f32), rng.gen_range(-4.0..4.0f32)];
        for y in y0..y1 {
            for x in x0..x1 {
                vecs[y * w + x] = v;
            }
        }
    }
    for v in &mut vecs {
        v[0] += rng.gen_range(-0.3..0.3f32);
        v[1] += rng.gen_range(-0.3..0.3f32);
    }
    let density = rng.gen_range(0.3..1.0);
    let mut mask: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(density)).collect();
    mask[rng.gen_range(0..w * h)] = true;
    (FlowField::new(w, h, vecs).unwrap(), mask)
}

pub fn half_planes() -> FlowField {
    let vecs = (0..400)
        .map(|i| if i / 20 < 10 { [5.0, 0.0] } else { [-5.0, 0.0] })
        .collect();
    FlowField::new(20, 20, vecs).unwrap()
}
