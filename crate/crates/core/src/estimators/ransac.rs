use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{solve_lsq, transfer_errors, Conditioning, CorrespondenceSet, EstimatorReport};
use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2};

/// Degenerate draws are skipped, but never more than this many per hypothesis budget.
const DEGENERATE_DRAW_CAP: usize = 10;
/// Minimal samples with a triangle area below this fraction of the squared
/// extent count as collinear.
const COLLINEAR_TOLERANCE: f64 = 1e-6;
const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub threshold: f64,
    pub max_hypotheses: usize,
    pub confidence: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            threshold: 5.0,
            max_hypotheses: 1000,
            confidence: 0.999,
        }
    }
}

fn has_collinear_triple(pts: &[Point2; 4]) -> bool {
    let extent = pts
        .iter()
        .flat_map(|a| pts.iter().map(move |b| a.distance(b)))
        .fold(0.0, f64::max);
    if extent == 0.0 {
        return true;
    }
    let tol = COLLINEAR_TOLERANCE * extent * extent;
    TRIPLES.iter().any(|&[i, j, k]| {
        let (a, b, c) = (pts[i], pts[j], pts[k]);
        orientation(a, b, c).abs() <= tol
    })
}

fn orientation(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// A homography defined over a sample keeps the orientation of every point
/// triple; a sample where some triple flips cannot come from one plane.
fn orientation_flips(src: &[Point2; 4], dst: &[Point2; 4]) -> bool {
    TRIPLES.iter().any(|&[i, j, k]| {
        orientation(src[i], src[j], src[k]).signum() != orientation(dst[i], dst[j], dst[k]).signum()
    })
}

/// Hypotheses required to see one all-inlier minimal sample with the given confidence.
fn required_hypotheses(inlier_ratio: f64, confidence: f64) -> f64 {
    let good = inlier_ratio.powi(4);
    if good >= 1.0 {
        return 1.0;
    }
    if good <= 0.0 {
        return f64::INFINITY;
    }
    (1.0 - confidence).ln() / (1.0 - good).ln()
}

struct Hypothesis {
    homography: Homography,
    inliers: usize,
    inlier_residual_sum: f64,
}

impl Hypothesis {
    fn beats(&self, other: &Hypothesis) -> bool {
        self.inliers > other.inliers
            || (self.inliers == other.inliers && self.inlier_residual_sum < other.inlier_residual_sum)
    }
}

/// Hypothesize-and-verify over exact 4-pair solutions, refit by least
/// squares on the best consensus set. Deterministic for a given seed.
pub fn solve_ransac(c: &CorrespondenceSet, params: &RansacParams, seed: u64) -> Result<EstimatorReport> {
    let n = c.len();
    if n < 4 {
        return Err(Error::TooFewCorrespondences(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = c.pairs();
    let max_draws = params.max_hypotheses.saturating_mul(DEGENERATE_DRAW_CAP).max(1);
    let mut best: Option<Hypothesis> = None;
    let mut hypotheses = 0usize;
    let mut draws = 0usize;
    let mut needed = params.max_hypotheses as f64;

    while hypotheses < params.max_hypotheses && (hypotheses as f64) < needed && draws < max_draws {
        draws += 1;
        let idx = sample(&mut rng, n, 4);
        let pick = |f: &dyn Fn(usize) -> Point2| [f(idx.index(0)), f(idx.index(1)), f(idx.index(2)), f(idx.index(3))];
        let src = pick(&|i| pairs[i].p);
        let dst = pick(&|i| pairs[i].p_prime);
        if has_collinear_triple(&src) || has_collinear_triple(&dst) || orientation_flips(&src, &dst) {
            continue;
        }
        let Ok(h) = Homography::from_four_points(&src, &dst) else {
            continue;
        };
        hypotheses += 1;
        let residuals = transfer_errors(c, &h);
        let mut inliers = 0;
        let mut sum = 0.0;
        for &r in &residuals {
            if r <= params.threshold {
                inliers += 1;
                sum += r;
            }
        }
        let cand = Hypothesis {
            homography: h,
            inliers,
            inlier_residual_sum: sum,
        };
        if best.as_ref().is_none_or(|b| cand.beats(b)) {
            needed = required_hypotheses(inliers as f64 / n as f64, params.confidence)
                .min(params.max_hypotheses as f64);
            best = Some(cand);
        }
    }

    let best = best.ok_or(Error::NoValidHypothesis { attempts: draws })?;
    let residuals = transfer_errors(c, &best.homography);
    let inlier_idx: Vec<usize> = (0..n).filter(|&i| residuals[i] <= params.threshold).collect();
    let refined = if inlier_idx.len() >= 4 {
        solve_lsq(&c.select(&inlier_idx), Conditioning::Hartley)
            .map(|r| r.homography)
            .unwrap_or(best.homography)
    } else {
        best.homography
    };
    Ok(EstimatorReport::from_homography(
        c,
        refined,
        params.threshold,
        hypotheses,
    ))
}
