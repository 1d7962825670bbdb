use serde::{Deserialize, Serialize};

use super::{solve_detail, transfer_errors, Conditioning, CorrespondenceSet, EstimatorReport};
use super::DEFAULT_INLIER_THRESHOLD;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrlsParams {
    /// Huber transition point in pixels.
    pub delta: f64,
    pub max_iters: usize,
    /// Stop when the relative max-norm change of the parameters drops below this.
    pub tol: f64,
}

impl Default for IrlsParams {
    fn default() -> Self {
        Self {
            delta: 5.0,
            max_iters: 20,
            tol: 1e-9,
        }
    }
}

/// Huber reweighting: 1 inside `delta`, `delta / |r|` beyond.
#[inline]
pub fn huber_multiplier(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        1.0
    } else if a.is_finite() {
        delta / a
    } else {
        0.0
    }
}

/// Iteratively reweighted least squares for the Huber loss on transfer
/// errors. Robust multipliers are combined with the input weights, not
/// substituted for them. Hitting `max_iters` is not an error; the last
/// iterate is returned and `iterations` records the number of solves.
pub fn solve_irls_huber(c: &CorrespondenceSet, params: &IrlsParams) -> Result<EstimatorReport> {
    let base: Vec<f64> = (0..c.len()).map(|i| c.weight(i)).collect();
    let mut current = solve_detail(c, Some(&base), Conditioning::Hartley)?.homography;
    let mut iterations = 1;
    while iterations < params.max_iters.max(1) {
        let residuals = transfer_errors(c, &current);
        let w: Vec<f64> = base
            .iter()
            .zip(&residuals)
            .map(|(b, &r)| b * huber_multiplier(r, params.delta))
            .collect();
        let next = solve_detail(c, Some(&w), Conditioning::Hartley)?.homography;
        iterations += 1;
        let old = current.params();
        let new = next.params();
        let scale = old.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let change = old
            .iter()
            .zip(&new)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        current = next;
        if change <= params.tol * (1.0 + scale) {
            break;
        }
    }
    Ok(EstimatorReport::from_homography(
        c,
        current,
        DEFAULT_INLIER_THRESHOLD,
        iterations,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{solve_lsq, solve_weighted_lsq, Correspondence};
    use crate::geometry::{Homography, Point2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, n: usize) -> (Homography, Vec<Correspondence>, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = Homography::from_row_major(&[1.1, 0.05, 20.0, -0.04, 0.95, -10.0, 1.5e-4, -1e-4, 1.0]).unwrap();
        let pairs = (0..n)
            .map(|_| {
                let p = Point2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
                Correspondence::new(p, h.warp_point(p).unwrap())
            })
            .collect();
        (h, pairs, rng)
    }

    #[test]
    fn huber_multiplier_shape() {
        assert_eq!(huber_multiplier(0.0, 5.0), 1.0);
        assert_eq!(huber_multiplier(5.0, 5.0), 1.0);
        assert_eq!(huber_multiplier(-10.0, 5.0), 0.5);
        assert_eq!(huber_multiplier(f64::INFINITY, 5.0), 0.0);
    }

    #[test]
    fn clean_data_converges_immediately() {
        let (_, pairs, _) = setup(1, 50);
        let c = CorrespondenceSet::new(pairs);
        let r = solve_irls_huber(&c, &IrlsParams::default()).unwrap();
        let l = solve_lsq(&c, Conditioning::Hartley).unwrap();
        assert!(r.iterations <= 2, "{}", r.iterations);
        assert!(r.homography.max_abs_diff(&l.homography) < 1e-9);
    }

    #[test]
    fn gross_outliers_are_suppressed() {
        let (h, mut pairs, mut rng) = setup(2, 200);
        let n_out = 60;
        for pr in pairs.iter_mut().take(n_out) {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let m: f64 = rng.random_range(50.0..150.0);
            pr.p_prime = pr.p_prime + Point2::new(m * a.cos(), m * a.sin());
        }
        let c = CorrespondenceSet::new(pairs.clone());
        let params = IrlsParams { delta: 5.0, max_iters: 100, tol: 1e-10 };
        let r = solve_irls_huber(&c, &params).unwrap();
        let oracle = solve_lsq(&CorrespondenceSet::new(pairs[n_out..].to_vec()), Conditioning::Hartley).unwrap();
        let errs: Vec<f64> = pairs[n_out..]
            .iter()
            .map(|pr| r.homography.warp_point(pr.p).unwrap().distance(&h.warp_point(pr.p).unwrap()))
            .collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!(mean < 0.5, "mean inlier transfer error {mean}");
        assert!(oracle.residuals.iter().all(|&e| e < 1e-6));
    }

    #[test]
    fn zero_weight_outliers_match_weighted_solve() {
        let (_, mut pairs, mut rng) = setup(3, 120);
        let mut w = vec![1.0; pairs.len()];
        for (i, pr) in pairs.iter_mut().enumerate() {
            pr.p_prime = pr.p_prime + Point2::new(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7));
            if i % 4 == 0 {
                pr.p_prime = pr.p_prime + Point2::new(80.0, -40.0);
                w[i] = 0.0;
            } else {
                w[i] = rng.random_range(0.5..1.0);
            }
        }
        let c = CorrespondenceSet::with_weights(pairs, w).unwrap();
        let irls = solve_irls_huber(&c, &IrlsParams::default()).unwrap();
        let wl = solve_weighted_lsq(&c).unwrap();
        assert!(irls.homography.max_abs_diff(&wl.homography) < 1e-6);
    }
}
