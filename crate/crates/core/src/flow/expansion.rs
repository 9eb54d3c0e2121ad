//! Quadratic polynomial expansion of a frame.
//!
//! Each pixel's neighbourhood is fit, in weighted least squares with a
//! separable Gaussian applicability, by `f(p) ~ p^T A p + b^T p + c` in
//! coordinates centred on the pixel (`x` to the right, `y` down). With a
//! symmetric separable weight the normal matrix over the basis
//! `{1, x, y, x^2, y^2, xy}` only couples `1`, `x^2` and `y^2`; the rest
//! is diagonal. So the fit reduces to six separable correlations and a
//! fixed 3x3 inverse shared by every pixel.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::Frame;

/// Quadratic model of one pixel's neighbourhood. `A = [[a11, a12], [a12, a22]]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PolyCoeffs {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub b1: f64,
    pub b2: f64,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyExpansion {
    pub width: usize,
    pub height: usize,
    pub coeffs: Vec<PolyCoeffs>,
}

impl PolyExpansion {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &PolyCoeffs {
        &self.coeffs[y * self.width + x]
    }
}

/// Expands every pixel of `frame` over a `poly_n x poly_n` window. Pixels
/// outside the frame take the value of the nearest edge pixel.
pub fn polynomial_expansion(frame: &Frame, poly_n: usize, poly_sigma: f64) -> Result<PolyExpansion> {
    if poly_n < 3 || poly_n.is_multiple_of(2) {
        return Err(Error::contract(format!("poly_n {poly_n} must be odd and >= 3")));
    }
    if !(poly_sigma > 0.0 && poly_sigma.is_finite()) {
        return Err(Error::contract(format!("poly_sigma {poly_sigma} must be positive")));
    }
    let (w, h) = (frame.width(), frame.height());
    if w < poly_n || h < poly_n {
        return Err(Error::contract(format!(
            "frame {w}x{h} smaller than expansion window {poly_n}"
        )));
    }
    let r = (poly_n / 2) as isize;
    let g: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * poly_sigma * poly_sigma)).exp())
        .collect();
    let (mut m0, mut m2, mut m4) = (0.0, 0.0, 0.0);
    for (i, k) in (-r..=r).enumerate() {
        let k2 = (k * k) as f64;
        m0 += g[i];
        m2 += g[i] * k2;
        m4 += g[i] * k2 * k2;
    }
    let inv = invert3([
        [m0 * m0, m0 * m2, m0 * m2],
        [m0 * m2, m0 * m4, m2 * m2],
        [m0 * m2, m2 * m2, m0 * m4],
    ]);
    let lin = 1.0 / (m0 * m2);
    let cross = 1.0 / (m2 * m2);

    let luma = frame.luma();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    // horizontal pass: moments 0, 1, 2 along x
    let mut rows = vec![[0.0f64; 3]; w * h];
    rows.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
        let line = &luma[y * w..(y + 1) * w];
        for (x, acc) in out.iter_mut().enumerate() {
            for (i, k) in (-r..=r).enumerate() {
                let v = g[i] * line[clamp(x as isize + k, w)];
                let kf = k as f64;
                acc[0] += v;
                acc[1] += v * kf;
                acc[2] += v * kf * kf;
            }
        }
    });

    let mut coeffs = vec![PolyCoeffs::default(); w * h];
    coeffs.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
        for (x, pc) in out.iter_mut().enumerate() {
            // f1, fx, fy, fxx, fyy, fxy
            let mut f = [0.0f64; 6];
            for (i, l) in (-r..=r).enumerate() {
                let s = &rows[clamp(y as isize + l, h) * w + x];
                let lf = l as f64;
                let gl = g[i];
                f[0] += gl * s[0];
                f[1] += gl * s[1];
                f[2] += gl * lf * s[0];
                f[3] += gl * s[2];
                f[4] += gl * lf * lf * s[0];
                f[5] += gl * lf * s[1];
            }
            let even = [f[0], f[3], f[4]];
            let solve = |row: &[f64; 3]| row[0] * even[0] + row[1] * even[1] + row[2] * even[2];
            *pc = PolyCoeffs {
                c: solve(&inv[0]),
                a11: solve(&inv[1]),
                a22: solve(&inv[2]),
                b1: f[1] * lin,
                b2: f[2] * lin,
                a12: 0.5 * f[5] * cross,
            };
        }
    });
    Ok(PolyExpansion {
        width: w,
        height: h,
        coeffs,
    })
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let det = m[0][0] * adj[0][0] + m[0][1] * adj[1][0] + m[0][2] * adj[2][0];
    adj.map(|row| row.map(|v| v / det))
}
