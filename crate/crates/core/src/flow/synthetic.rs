use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::FlowField;
use crate::error::{Error, Result};
use crate::geometry::{Homography, Mask, Point2};

/// How a synthetic flow field departs from the exact homography flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    /// Standard deviation of per-component Gaussian noise, pixels.
    pub noise_sigma: f64,
    /// Fraction of pixels replaced by random displacements, in `[0, 1)`.
    pub outlier_fraction: f64,
    /// Outlier displacements have magnitude uniform in `[0, outlier_magnitude]`.
    pub outlier_magnitude: f64,
    pub rng_seed: u64,
}

impl ContaminationSpec {
    pub fn clean() -> Self {
        Self {
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            outlier_magnitude: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise sigma {}", self.noise_sigma)));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidParameter(format!(
                "outlier fraction {} outside [0, 1)",
                self.outlier_fraction
            )));
        }
        if !(self.outlier_magnitude >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "outlier magnitude {}",
                self.outlier_magnitude
            )));
        }
        Ok(())
    }
}

/// A generated flow field together with the ground-truth outlier labels.
#[derive(Clone, Debug)]
pub struct SyntheticFlow {
    pub field: FlowField,
    pub outliers: Mask,
}

/// Exact homography flow `H(x) − x` over a `size` grid, then contaminated.
/// Exactly `⌊outlier_fraction · W · H⌋` pixels are labelled outliers.
pub fn synthetic_flow(h: &Homography, size: (usize, usize), spec: &ContaminationSpec) -> Result<SyntheticFlow> {
    spec.validate()?;
    h.inverse()?;
    let (w, ht) = size;
    let n = w * ht;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut field = FlowField::invalid(w, ht);
    let m = h.matrix();
    let [a, b, c, d, e, f, g, hh, i] = [
        m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)],
    ];
    for y in 0..ht {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let z = g * xf + hh * yf + i;
            if z.abs() <= 1e-12 {
                continue;
            }
            let qx = (a * xf + b * yf + c) / z;
            let qy = (d * xf + e * yf + f) / z;
            field.set(x, y, Some((qx - xf, qy - yf)));
        }
    }

    let mut outliers = Mask::new(w, ht, false);
    let n_out = (spec.outlier_fraction * n as f64).floor() as usize;
    if n_out > 0 {
        for i in sample(&mut rng, n, n_out) {
            outliers.set(i % w, i / w, true);
        }
    }
    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).unwrap());
    for y in 0..ht {
        for x in 0..w {
            if outliers.get(x, y) {
                let d = random_displacement(&mut rng, spec.outlier_magnitude);
                field.set(x, y, Some((d.x, d.y)));
            } else if let (Some(nz), Some((u, v))) = (&noise, field.get(x, y)) {
                field.set(x, y, Some((u + nz.sample(&mut rng), v + nz.sample(&mut rng))));
            }
        }
    }
    Ok(SyntheticFlow { field, outliers })
}

/// Uniform direction, magnitude uniform in `[0, max]`.
pub(crate) fn random_displacement(rng: &mut impl Rng, max: f64) -> Point2 {
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let m: f64 = if max > 0.0 { rng.random_range(0.0..=max) } else { 0.0 };
    Point2::new(m * a.cos(), m * a.sin())
}
