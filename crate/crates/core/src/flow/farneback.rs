//! Coarse-to-fine displacement estimation from polynomial expansions.
//!
//! At each pyramid level and refinement pass, with `d` the current
//! displacement at a pixel and the second frame's coefficients sampled at
//! `x + d`:
//!
//! ```text
//! A  = (A_prev(x) + A_next(x + d)) / 2
//! db = -(b_next(x + d) - b_prev(x)) / 2 + A d
//! G  = sum_window A^T A        h = sum_window A^T db
//! d' = (G + lambda I)^-1 h,    lambda = 1e-3 * trace(G) / 2 + 1e-12
//! ```
//!
//! The window sum is a uniform box over `window_size x window_size`.

use rayon::prelude::*;

use super::{polynomial_expansion, sample_bilinear, FlowField, FlowParams, PolyExpansion};
use crate::error::{Error, Result};
use crate::flow::pyramid::gaussian_pyramid;
use crate::ingest::Frame;

pub fn farneback_flow(prev: &Frame, next: &Frame, params: &FlowParams) -> Result<FlowField> {
    params.validate()?;
    if prev.width() != next.width() || prev.height() != next.height() {
        return Err(Error::contract(format!(
            "frame sizes differ: {}x{} vs {}x{}",
            prev.width(),
            prev.height(),
            next.width(),
            next.height()
        )));
    }
    if prev.width() < params.poly_n || prev.height() < params.poly_n {
        return Err(Error::contract(format!(
            "frames {}x{} smaller than poly_n {}",
            prev.width(),
            prev.height(),
            params.poly_n
        )));
    }
    let levels = params.pyramid_levels;
    let pyr_prev = gaussian_pyramid(prev, levels, params.pyramid_scale, params.poly_n)?;
    let pyr_next = gaussian_pyramid(next, levels, params.pyramid_scale, params.poly_n)?;
    let radius = params.window_size / 2;

    let mut flow: Vec<[f64; 2]> = Vec::new();
    let mut flow_dims = (0, 0);
    for level in (0..pyr_prev.len()).rev() {
        let (w, h) = (pyr_prev[level].width(), pyr_prev[level].height());
        let exp_prev = polynomial_expansion(&pyr_prev[level], params.poly_n, params.poly_sigma)?;
        let exp_next = polynomial_expansion(&pyr_next[level], params.poly_n, params.poly_sigma)?;
        flow = if flow.is_empty() {
            vec![[0.0; 2]; w * h]
        } else {
            upsample_flow(&flow, flow_dims.0, flow_dims.1, w, h, 1.0 / params.pyramid_scale)
        };
        flow_dims = (w, h);
        for _ in 0..params.iterations {
            let mut eqs = update_equations(&exp_prev, &exp_next, &flow);
            box_filter(&mut eqs, w, h, radius);
            flow = eqs.par_iter().map(solve_damped).collect();
        }
    }
    let vectors = flow.into_iter().map(|[u, v]| [u as f32, v as f32]).collect();
    FlowField::new(prev.width(), prev.height(), vectors)
}

/// Per-pixel `[g11, g12, g22, h1, h2]` before window averaging.
fn update_equations(prev: &PolyExpansion, next: &PolyExpansion, flow: &[[f64; 2]]) -> Vec<[f64; 5]> {
    let (w, h) = (prev.width, prev.height);
    let next_grid: Vec<[f64; 5]> = next.coeffs.iter().map(|c| [c.a11, c.a12, c.a22, c.b1, c.b2]).collect();
    let mut out = vec![[0.0; 5]; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, eq) in row.iter_mut().enumerate() {
            let i = y * w + x;
            let [dx, dy] = flow[i];
            let p = &prev.coeffs[i];
            let n = sample_bilinear(&next_grid, w, h, x as f64 + dx, y as f64 + dy);
            let a11 = 0.5 * (p.a11 + n[0]);
            let a12 = 0.5 * (p.a12 + n[1]);
            let a22 = 0.5 * (p.a22 + n[2]);
            let db1 = -0.5 * (n[3] - p.b1) + a11 * dx + a12 * dy;
            let db2 = -0.5 * (n[4] - p.b2) + a12 * dx + a22 * dy;
            *eq = [
                a11 * a11 + a12 * a12,
                a12 * (a11 + a22),
                a12 * a12 + a22 * a22,
                a11 * db1 + a12 * db2,
                a12 * db1 + a22 * db2,
            ];
        }
    });
    out
}

/// Separable running-sum box filter with replicated borders.
fn box_filter(data: &mut [[f64; 5]], w: usize, h: usize, radius: usize) {
    let r = radius as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let add = |acc: &mut [f64; 5], v: &[f64; 5], sign: f64| {
        for k in 0..5 {
            acc[k] += sign * v[k];
        }
    };

    data.par_chunks_mut(w).for_each(|row| {
        let src = row.to_vec();
        let mut acc = [0.0; 5];
        for k in -r..=r {
            add(&mut acc, &src[clamp(k, w)], 1.0);
        }
        for (x, out) in row.iter_mut().enumerate() {
            *out = acc;
            let xi = x as isize;
            add(&mut acc, &src[clamp(xi + r + 1, w)], 1.0);
            add(&mut acc, &src[clamp(xi - r, w)], -1.0);
        }
    });

    let src = data.to_vec();
    let mut acc = vec![[0.0; 5]; w];
    for k in -r..=r {
        let y = clamp(k, h);
        for x in 0..w {
            add(&mut acc[x], &src[y * w + x], 1.0);
        }
    }
    for y in 0..h {
        data[y * w..(y + 1) * w].copy_from_slice(&acc);
        let yi = y as isize;
        let (enter, leave) = (clamp(yi + r + 1, h), clamp(yi - r, h));
        for x in 0..w {
            add(&mut acc[x], &src[enter * w + x], 1.0);
            add(&mut acc[x], &src[leave * w + x], -1.0);
        }
    }
}

fn solve_damped(eq: &[f64; 5]) -> [f64; 2] {
    let [g11, g12, g22, h1, h2] = *eq;
    let lambda = 1e-3 * (g11 + g22) / 2.0 + 1e-12;
    let (g11, g22) = (g11 + lambda, g22 + lambda);
    let det = g11 * g22 - g12 * g12;
    [(g22 * h1 - g12 * h2) / det, (g11 * h2 - g12 * h1) / det]
}

fn upsample_flow(flow: &[[f64; 2]], cw: usize, ch: usize, w: usize, h: usize, gain: f64) -> Vec<[f64; 2]> {
    let (sx, sy) = (cw as f64 / w as f64, ch as f64 / h as f64);
    let mut out = vec![[0.0; 2]; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let fy = (y as f64 + 0.5) * sy - 0.5;
        for (x, d) in row.iter_mut().enumerate() {
            let fx = (x as f64 + 0.5) * sx - 0.5;
            let [u, v] = sample_bilinear(flow, cw, ch, fx, fy);
            *d = [u * gain, v * gain];
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_filter_matches_direct_sum() {
        let (w, h, r) = (7usize, 5usize, 2isize);
        let data: Vec<[f64; 5]> = (0..w * h)
            .map(|i| [i as f64, (i * i % 11) as f64, 1.0, 0.0, -(i as f64)])
            .collect();
        let mut fast = data.clone();
        box_filter(&mut fast, w, h, r as usize);
        let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
        for y in 0..h {
            for x in 0..w {
                for k in 0..5 {
                    let mut s = 0.0;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            s += data[clamp(y as isize + dy, h) * w + clamp(x as isize + dx, w)][k];
                        }
                    }
                    assert!((fast[y * w + x][k] - s).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn damped_solve_of_zero_system_is_zero() {
        assert_eq!(solve_damped(&[0.0; 5]), [0.0, 0.0]);
        let d = solve_damped(&[2.0, 0.0, 2.0, 4.0, -2.0]);
        assert!((d[0] - 4.0 / 2.002).abs() < 1e-12 && (d[1] + 2.0 / 2.002).abs() < 1e-12);
    }

    #[test]
    fn mismatched_sizes_error() {
        let a = Frame::constant(16, 16, 0, 0.5).unwrap();
        let b = Frame::constant(16, 15, 1, 0.5).unwrap();
        assert!(matches!(
            farneback_flow(&a, &b, &FlowParams::default()),
            Err(Error::Contract(_))
        ));
    }
}
