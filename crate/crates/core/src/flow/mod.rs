//! Dense two-frame optical flow and the moving-pixel gate.

mod expansion;
mod farneback;
mod pyramid;

pub use expansion::{polynomial_expansion, PolyCoeffs, PolyExpansion};
pub use farneback::farneback_flow;
pub use pyramid::gaussian_pyramid;

use crate::error::{Error, Result};

/// Per-pixel displacement `(u, v)`, `u` to the right and `v` downwards, in
/// pixels per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, vectors: Vec<[f32; 2]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!("flow dimensions {width}x{height}")));
        }
        if vectors.len() != width * height {
            return Err(Error::Invalid(format!(
                "flow has {} vectors, expected {}",
                vectors.len(),
                width * height
            )));
        }
        if vectors.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("non-finite flow component".into()));
        }
        Ok(Self { width, height, vectors })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            vectors: vec![[0.0; 2]; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.vectors
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.vectors[y * self.width + x]
    }
}

/// Farneback parameters. Defaults are the customary settings for the method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    /// Side of the box window the displacement equations are averaged over.
    pub window_size: usize,
    /// Refinement passes per pyramid level.
    pub iterations: usize,
    /// Side of the polynomial expansion neighbourhood.
    pub poly_n: usize,
    /// Std-dev of the Gaussian applicability in the expansion.
    pub poly_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            pyramid_scale: 0.5,
            window_size: 15,
            iterations: 3,
            poly_n: 5,
            poly_sigma: 1.1,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Invalid(msg.to_string()));
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be >= 1");
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return bad("pyramid_scale must lie in (0, 1)");
        }
        if self.window_size.is_multiple_of(2) {
            return bad("window_size must be odd and positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if self.poly_n < 3 || self.poly_n.is_multiple_of(2) {
            return bad("poly_n must be odd and >= 3");
        }
        if !(self.poly_sigma > 0.0 && self.poly_sigma.is_finite()) {
            return bad("poly_sigma must be positive");
        }
        Ok(())
    }
}

pub fn flow_magnitude(field: &FlowField) -> Vec<f64> {
    field.vectors.iter().map(|&[u, v]| (u as f64).hypot(v as f64)).collect()
}

/// Pixels whose flow magnitude is strictly greater than `eps`.
pub fn motion_mask(field: &FlowField, eps: f64) -> Vec<bool> {
    flow_magnitude(field).into_iter().map(|m| m > eps).collect()
}

/// Fraction of pixels whose flow magnitude is strictly greater than `eps`.
pub fn motion_fraction(field: &FlowField, eps: f64) -> f64 {
    let moving = flow_magnitude(field).into_iter().filter(|&m| m > eps).count();
    moving as f64 / field.vectors.len() as f64
}

/// Bounds on the moving-pixel fraction of an accepted frame pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for GateThresholds {
    fn default() -> Self {
        Self { low: 0.10, high: 0.70 }
    }
}

impl GateThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.low && self.low < self.high && self.high <= 1.0) {
            return Err(Error::Invalid(format!(
                "gate thresholds must satisfy 0 <= low < high <= 1 (got {} / {})",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateDecision {
    Accept,
    /// Not enough motion: fraction <= low.
    TooStill,
    /// Too much of the frame moves: fraction >= high.
    TooBusy,
}

/// Accepts iff `low < fraction < high`.
pub fn motion_gate(fraction: f64, thresholds: GateThresholds) -> GateDecision {
    if fraction <= thresholds.low {
        GateDecision::TooStill
    } else if fraction >= thresholds.high {
        GateDecision::TooBusy
    } else {
        GateDecision::Accept
    }
}

/// Clamp-to-edge bilinear sample of a row-major grid of `N`-vectors.
#[inline]
pub(crate) fn sample_bilinear<const N: usize>(
    data: &[[f64; N]],
    width: usize,
    height: usize,
    x: f64,
    y: f64,
) -> [f64; N] {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let (p00, p10) = (&data[y0 * width + x0], &data[y0 * width + x1]);
    let (p01, p11) = (&data[y1 * width + x0], &data[y1 * width + x1]);
    let mut out = [0.0; N];
    for k in 0..N {
        let top = p00[k] + (p10[k] - p00[k]) * fx;
        let bottom = p01[k] + (p11[k] - p01[k]) * fx;
        out[k] = top + (bottom - top) * fy;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(vs: &[[f32; 2]]) -> FlowField {
        FlowField::new(vs.len(), 1, vs.to_vec()).unwrap()
    }

    #[test]
    fn magnitude() {
        let f = field(&[[3.0, 4.0], [0.0, 0.0], [-1.0, 0.0]]);
        assert_eq!(flow_magnitude(&f), vec![5.0, 0.0, 1.0]);
    }

    #[test]
    fn fraction_uses_strict_inequality() {
        assert_eq!(motion_fraction(&FlowField::zeros(4, 4), 0.5), 0.0);
        let half = field(&[[1.0, 0.0], [0.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
        assert_eq!(motion_fraction(&half, 0.5), 0.5);
        let boundary = field(&[[0.5, 0.0], [0.0, -0.5], [-0.5, 0.0]]);
        assert_eq!(motion_fraction(&boundary, 0.5), 0.0);
    }

    #[test]
    fn gate_thresholds_are_strict() {
        let t = GateThresholds::default();
        assert_eq!(motion_gate(0.05, t), GateDecision::TooStill);
        assert_eq!(motion_gate(0.10, t), GateDecision::TooStill);
        assert_eq!(motion_gate(0.50, t), GateDecision::Accept);
        assert_eq!(motion_gate(0.70, t), GateDecision::TooBusy);
        assert_eq!(motion_gate(0.95, t), GateDecision::TooBusy);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(FlowField::new(1, 1, vec![[f32::NAN, 0.0]]).is_err());
        assert!(FlowField::new(2, 1, vec![[0.0, 0.0]]).is_err());
    }

    #[test]
    #[allow(clippy::field_reassign_with_default)]
    fn params_validation() {
        assert!(FlowParams::default().validate().is_ok());
        let mut p = FlowParams::default();
        p.poly_n = 4;
        assert!(p.validate().is_err());
        p = FlowParams::default();
        p.pyramid_scale = 1.0;
        assert!(p.validate().is_err());
        p = FlowParams::default();
        p.window_size = 14;
        assert!(p.validate().is_err());
    }
}
