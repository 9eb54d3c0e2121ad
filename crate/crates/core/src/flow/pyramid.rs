//! Gaussian pyramid: 5-tap `[1 4 6 4 1] / 16` blur with replicated borders,
//! then bilinear resampling to `round(dim * scale^i)` of the base size.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::Frame;

/// Builds up to `levels` levels, finest first. Level 0 is `frame` itself.
/// Stops early once a dimension would fall below `min_size`.
pub fn gaussian_pyramid(frame: &Frame, levels: usize, scale: f64, min_size: usize) -> Result<Vec<Frame>> {
    if levels == 0 {
        return Err(Error::contract("pyramid needs at least one level"));
    }
    if !(scale > 0.0 && scale < 1.0) {
        return Err(Error::contract(format!("pyramid scale {scale} outside (0, 1)")));
    }
    let mut out = vec![frame.clone()];
    for i in 1..levels {
        let factor = scale.powi(i as i32);
        let w = (frame.width() as f64 * factor).round() as usize;
        let h = (frame.height() as f64 * factor).round() as usize;
        if w < min_size.max(1) || h < min_size.max(1) {
            break;
        }
        let prev = out.last().unwrap();
        let blurred = blur5(prev.luma(), prev.width(), prev.height());
        let luma = resample(&blurred, prev.width(), prev.height(), w, h);
        out.push(Frame::new(w, h, frame.index(), luma)?);
    }
    Ok(out)
}

const TAPS: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn blur5(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let line = &src[y * w..(y + 1) * w];
        for (x, out) in row.iter_mut().enumerate() {
            *out = TAPS
                .iter()
                .enumerate()
                .map(|(k, t)| t * line[clamp(x as isize + k as isize - 2, w)])
                .sum();
        }
    });
    let mut dst = vec![0.0; w * h];
    dst.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = TAPS
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[clamp(y as isize + k as isize - 2, h) * w + x])
                .sum();
        }
    });
    // keep [0, 1] exact despite rounding
    dst.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    dst
}

/// Center-aligned bilinear resampling with replicated borders.
pub(crate) fn resample(src: &[f64], w: usize, h: usize, nw: usize, nh: usize) -> Vec<f64> {
    let grid: Vec<[f64; 1]> = src.iter().map(|&v| [v]).collect();
    let (sx, sy) = (w as f64 / nw as f64, h as f64 / nh as f64);
    let mut dst = vec![0.0; nw * nh];
    dst.par_chunks_mut(nw).enumerate().for_each(|(y, row)| {
        let fy = (y as f64 + 0.5) * sy - 0.5;
        for (x, out) in row.iter_mut().enumerate() {
            let fx = (x as f64 + 0.5) * sx - 0.5;
            *out = super::sample_bilinear(&grid, w, h, fx, fy)[0].clamp(0.0, 1.0);
        }
    });
    dst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Frame {
        let luma = (0..w * h).map(|i| (i % w) as f64 / w as f64).collect();
        Frame::new(w, h, 3, luma).unwrap()
    }

    #[test]
    fn single_level_is_identity() {
        let f = ramp(10, 7);
        assert_eq!(gaussian_pyramid(&f, 1, 0.5, 5).unwrap(), vec![f]);
    }

    #[test]
    fn sizes_follow_rounding_rule() {
        let f = ramp(100, 80);
        let p = gaussian_pyramid(&f, 3, 0.5, 5).unwrap();
        let dims: Vec<_> = p.iter().map(|l| (l.width(), l.height())).collect();
        assert_eq!(dims, vec![(100, 80), (50, 40), (25, 20)]);
        assert!(p.iter().all(|l| l.index() == 3));
    }

    #[test]
    fn stops_before_min_size() {
        let f = ramp(24, 24);
        let p = gaussian_pyramid(&f, 5, 0.5, 5).unwrap();
        // 24, 12, 6, then 3 < 5
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn constant_frames_stay_constant() {
        let f = Frame::constant(37, 23, 0, 0.42).unwrap();
        for level in gaussian_pyramid(&f, 4, 0.6, 3).unwrap() {
            assert!(level.luma().iter().all(|&v| (v - 0.42).abs() < 1e-12));
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let f = ramp(8, 8);
        assert!(gaussian_pyramid(&f, 0, 0.5, 3).is_err());
        assert!(gaussian_pyramid(&f, 2, 1.0, 3).is_err());
    }
}
