//! Dense flow fields, flow providers and per-pixel weight providers.
//!
//! The tracker only sees the [`FlowProvider`] and [`WeightProvider`] traits,
//! so a learned flow network or weight predictor can be attached without
//! touching the rest of the pipeline.

mod lk;
mod providers;
mod sampling;
mod synthetic;
mod weights;

pub use lk::{lucas_kanade_flow, lucas_kanade_flow_with, LkParams};
pub use providers::{
    FileFlowProvider, FlowProvider, FlowRequest, ForwardBackwardWeights, LkFlowProvider,
    SyntheticFlowProvider, UniformWeights, WeightProvider,
};
pub use sampling::{flow_to_correspondences, flow_to_correspondences_with, SampleOptions};
pub use synthetic::{synthetic_flow, ContaminationSpec, SyntheticFlow};
pub use weights::{weights_fb_at, weights_fb_consistency, weights_residual, weights_uniform};

use crate::error::{Error, Result};
use crate::geometry::Mask;

/// Per-pixel displacement with a validity mask. Invalid pixels carry zero flow.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    valid: Mask,
}

impl FlowField {
    /// All-invalid field.
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
            valid: Mask::new(width, height, false),
        }
    }

    /// All-valid zero field.
    pub fn zeros(width: usize, height: usize) -> Self {
        let mut f = Self::invalid(width, height);
        f.valid = Mask::new(width, height, true);
        f
    }

    pub fn from_parts(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>, valid: Mask) -> Result<Self> {
        let n = width * height;
        if u.len() != n || v.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: u.len().min(v.len()),
            });
        }
        if valid.size() != (width, height) {
            return Err(Error::ImageSizeMismatch {
                expected: (width, height),
                actual: valid.size(),
            });
        }
        let mut f = Self {
            width,
            height,
            u,
            v,
            valid,
        };
        for i in 0..n {
            if !f.valid.data()[i] {
                f.u[i] = 0.0;
                f.v[i] = 0.0;
            }
        }
        Ok(f)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Displacement at a pixel, `None` if invalid.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        let i = y * self.width + x;
        self.valid.get(x, y).then(|| (self.u[i], self.v[i]))
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, d: Option<(f64, f64)>) {
        let i = y * self.width + x;
        match d {
            Some((u, v)) => {
                self.u[i] = u;
                self.v[i] = v;
                self.valid.set(x, y, true);
            }
            None => {
                self.u[i] = 0.0;
                self.v[i] = 0.0;
                self.valid.set(x, y, false);
            }
        }
    }

    /// Bilinear sample; `None` outside the grid or if any contributing
    /// neighbour is invalid.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64) {
            return None;
        }
        let x0 = x as i64 as usize;
        let y0 = y as i64 as usize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        let valid = self.valid.data();
        let w = self.width;
        let (i00, i10, i01, i11) = (y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1);
        if !(valid[i00] && valid[i10] && valid[i01] && valid[i11]) {
            return None;
        }
        let lerp = |f: &[f64]| {
            let top = f[i00] + fx * (f[i10] - f[i00]);
            let bottom = f[i01] + fx * (f[i11] - f[i01]);
            top + fy * (bottom - top)
        };
        Some((lerp(&self.u), lerp(&self.v)))
    }
}

/// Per-pixel confidence in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    width: usize,
    height: usize,
    w: Vec<f64>,
}

impl WeightField {
    pub fn from_vec(width: usize, height: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: w.len(),
            });
        }
        if let Some(bad) = w.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidParameter(format!("weight {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, w })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.w[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_pixels_are_zeroed() {
        let mut valid = Mask::new(2, 1, true);
        valid.set(1, 0, false);
        let f = FlowField::from_parts(2, 1, vec![1.0, 2.0], vec![3.0, 4.0], valid).unwrap();
        assert_eq!(f.get(0, 0), Some((1.0, 3.0)));
        assert_eq!(f.get(1, 0), None);
        assert_eq!(f.u()[1], 0.0);
    }

    #[test]
    fn bilinear_sample_requires_valid_neighbours() {
        let mut f = FlowField::zeros(3, 3);
        f.set(1, 1, Some((2.0, -2.0)));
        let (u, v) = f.sample(0.5, 0.5).unwrap();
        assert!((u - 0.5).abs() < 1e-12 && (v + 0.5).abs() < 1e-12);
        assert_eq!(f.sample(1.0, 1.0), Some((2.0, -2.0)));
        f.set(2, 2, None);
        assert_eq!(f.sample(1.5, 1.5), None);
        assert_eq!(f.sample(1.0, 1.0), Some((2.0, -2.0)));
        assert_eq!(f.sample(-0.1, 0.0), None);
    }

    #[test]
    fn weight_field_validation() {
        assert!(WeightField::from_vec(2, 1, vec![0.5, 1.2]).is_err());
        assert!(WeightField::from_vec(2, 1, vec![0.5]).is_err());
        assert_eq!(WeightField::from_vec(1, 1, vec![0.25]).unwrap().get(0, 0), 0.25);
    }
}
