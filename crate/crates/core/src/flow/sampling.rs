use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FlowField, WeightField};
use crate::error::{Error, Result};
use crate::estimators::{Correspondence, CorrespondenceSet};
use crate::geometry::{Mask, Point2};

/// Optional extras for [`flow_to_correspondences_with`].
#[derive(Clone, Copy, Debug, Default)]
pub struct SampleOptions<'a> {
    /// Per-pixel weights carried onto the pairs.
    pub weights: Option<&'a WeightField>,
    /// Endpoints landing on a false pixel (nearest) are dropped.
    pub target_valid: Option<&'a Mask>,
}

/// Pairs `(p, p + f(p))` for valid masked pixels whose endpoint lies inside
/// the target, uniformly subsampled without replacement to `max_samples`.
pub fn flow_to_correspondences(
    f: &FlowField,
    template_mask: &Mask,
    target_size: (usize, usize),
    max_samples: usize,
    rng_seed: u64,
) -> Result<CorrespondenceSet> {
    flow_to_correspondences_with(f, template_mask, target_size, max_samples, rng_seed, SampleOptions::default())
}

pub fn flow_to_correspondences_with(
    f: &FlowField,
    template_mask: &Mask,
    target_size: (usize, usize),
    max_samples: usize,
    rng_seed: u64,
    opts: SampleOptions<'_>,
) -> Result<CorrespondenceSet> {
    if template_mask.size() != f.size() {
        return Err(Error::ImageSizeMismatch {
            expected: f.size(),
            actual: template_mask.size(),
        });
    }
    if let Some(w) = opts.weights {
        if w.size() != f.size() {
            return Err(Error::ImageSizeMismatch {
                expected: f.size(),
                actual: w.size(),
            });
        }
    }
    if let Some(m) = opts.target_valid {
        if m.size() != target_size {
            return Err(Error::ImageSizeMismatch {
                expected: target_size,
                actual: m.size(),
            });
        }
    }
    let (tw, th) = target_size;
    let (xmax, ymax) = (tw as f64 - 1.0, th as f64 - 1.0);
    let mut candidates = Vec::new();
    for y in 0..f.height() {
        for x in 0..f.width() {
            if !template_mask.get(x, y) {
                continue;
            }
            let Some((u, v)) = f.get(x, y) else { continue };
            let (ex, ey) = (x as f64 + u, y as f64 + v);
            if !(ex >= 0.0 && ey >= 0.0 && ex <= xmax && ey <= ymax) {
                continue;
            }
            if opts.target_valid.is_some_and(|m| !m.at_point(ex, ey)) {
                continue;
            }
            candidates.push((x, y, ex, ey));
        }
    }
    if candidates.len() > max_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut keep = sample(&mut rng, candidates.len(), max_samples).into_vec();
        keep.sort_unstable();
        candidates = keep.into_iter().map(|i| candidates[i]).collect();
    }
    let pairs = candidates
        .iter()
        .map(|&(x, y, ex, ey)| Correspondence::new(Point2::new(x as f64, y as f64), Point2::new(ex, ey)))
        .collect();
    match opts.weights {
        None => Ok(CorrespondenceSet::new(pairs)),
        Some(w) => {
            let ws = candidates.iter().map(|&(x, y, _, _)| w.get(x, y)).collect();
            CorrespondenceSet::with_weights(pairs, ws)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{synthetic_flow, weights_uniform, ContaminationSpec};
    use crate::geometry::Homography;

    #[test]
    fn full_mask_keeps_everything() {
        let f = FlowField::zeros(8, 6);
        let c = flow_to_correspondences(&f, &Mask::new(8, 6, true), (8, 6), 1000, 0).unwrap();
        assert_eq!(c.len(), 48);
        assert!(c.weights().is_none());
    }

    #[test]
    fn left_half_pushed_out() {
        let mut f = FlowField::zeros(10, 4);
        for y in 0..4 {
            for x in 0..5 {
                f.set(x, y, Some((-20.0, 0.0)));
            }
        }
        let c = flow_to_correspondences(&f, &Mask::new(10, 4, true), (10, 4), 1000, 0).unwrap();
        assert_eq!(c.len(), 20);
        assert!(c.pairs().iter().all(|p| p.p.x >= 5.0));
    }

    #[test]
    fn subsample_exact_and_seeded() {
        let f = FlowField::zeros(100, 100);
        let m = Mask::new(100, 100, true);
        let a = flow_to_correspondences(&f, &m, (100, 100), 500, 9).unwrap();
        let b = flow_to_correspondences(&f, &m, (100, 100), 500, 9).unwrap();
        let c = flow_to_correspondences(&f, &m, (100, 100), 500, 10).unwrap();
        assert_eq!(a.len(), 500);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn endpoints_stay_in_bounds_and_carry_weights() {
        let h = Homography::from_row_major(&[1.1, 0.05, 4.0, -0.02, 0.95, 3.0, 2e-4, 1e-4, 1.0]).unwrap();
        let f = synthetic_flow(&h, (50, 40), &ContaminationSpec::clean()).unwrap().field;
        let w = weights_uniform((50, 40));
        let mut valid = Mask::new(45, 35, true);
        valid.set(10, 10, false);
        let opts = SampleOptions {
            weights: Some(&w),
            target_valid: Some(&valid),
        };
        let c = flow_to_correspondences_with(&f, &Mask::new(50, 40, true), (45, 35), 10_000, 1, opts).unwrap();
        assert!(c.len() > 100);
        assert_eq!(c.weights().unwrap().len(), c.len());
        for p in c.pairs() {
            assert!(p.p_prime.x >= 0.0 && p.p_prime.x <= 44.0 && p.p_prime.y >= 0.0 && p.p_prime.y <= 34.0);
            assert!(valid.at_point(p.p_prime.x, p.p_prime.y));
        }
    }

    #[test]
    fn mask_size_mismatch() {
        let f = FlowField::zeros(4, 4);
        assert!(flow_to_correspondences(&f, &Mask::new(4, 5, true), (4, 4), 10, 0).is_err());
    }
}
