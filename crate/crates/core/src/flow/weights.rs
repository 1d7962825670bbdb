use super::{FlowField, WeightField};
use crate::error::{Error, Result};
use crate::estimators::{transfer_errors, CorrespondenceSet};
use crate::geometry::Homography;

/// Weights below this are flushed to exactly zero.
const FLUSH: f64 = 1e-100;

#[inline]
fn gaussian(e: f64, sigma: f64) -> f64 {
    let w = (-(e * e) / (2.0 * sigma * sigma)).exp();
    if w < FLUSH {
        0.0
    } else {
        w
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("sigma {sigma} must be positive")))
    }
}

pub fn weights_uniform(size: (usize, usize)) -> WeightField {
    WeightField::from_vec(size.0, size.1, vec![1.0; size.0 * size.1]).expect("ones are valid weights")
}

/// Forward–backward consistency: `e(x) = ‖f(x) + b(x + f(x))‖`, weight
/// `exp(−e²/2σ²)`. Invalid forward pixels and endpoints landing on invalid
/// backward samples get zero.
pub fn weights_fb_consistency(forward: &FlowField, backward: &FlowField, sigma: f64) -> Result<WeightField> {
    check_sigma(sigma)?;
    if forward.size() != backward.size() {
        return Err(Error::ImageSizeMismatch {
            expected: forward.size(),
            actual: backward.size(),
        });
    }
    let (w, h) = forward.size();
    let out = (0..w * h).map(|i| fb_weight(forward, backward, i % w, i / w, sigma)).collect();
    WeightField::from_vec(w, h, out)
}

/// [`weights_fb_consistency`] evaluated at the given pixels only.
pub fn weights_fb_at(
    forward: &FlowField,
    backward: &FlowField,
    sigma: f64,
    pixels: &[(usize, usize)],
) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    if forward.size() != backward.size() {
        return Err(Error::ImageSizeMismatch {
            expected: forward.size(),
            actual: backward.size(),
        });
    }
    let (w, h) = forward.size();
    if let Some(&(x, y)) = pixels.iter().find(|&&(x, y)| x >= w || y >= h) {
        return Err(Error::InvalidParameter(format!("pixel ({x}, {y}) outside {w}x{h} field")));
    }
    Ok(pixels.iter().map(|&(x, y)| fb_weight(forward, backward, x, y, sigma)).collect())
}

#[inline]
fn fb_weight(forward: &FlowField, backward: &FlowField, x: usize, y: usize, sigma: f64) -> f64 {
    let i = y * forward.width() + x;
    if !forward.valid().data()[i] {
        return 0.0;
    }
    let (u, v) = (forward.u()[i], forward.v()[i]);
    match backward.sample(x as f64 + u, y as f64 + v) {
        Some((bu, bv)) => gaussian(((u + bu) * (u + bu) + (v + bv) * (v + bv)).sqrt(), sigma),
        None => 0.0,
    }
}

/// Per-pair weights from transfer errors under an initial estimate.
pub fn weights_residual(c: &CorrespondenceSet, h_init: &Homography, sigma: f64) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    Ok(transfer_errors(c, h_init)
        .into_iter()
        .map(|r| if r.is_finite() { gaussian(r, sigma) } else { 0.0 })
        .collect())
}
