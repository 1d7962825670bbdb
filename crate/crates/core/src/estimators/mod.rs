//! Homography estimation from point correspondences.
//!
//! Every solver works on the non-homogeneous DLT system (h33 fixed to one),
//! solved by QR factorization and back-substitution. Weighted problems are
//! reduced to the plain one by scaling both rows of a correspondence, and
//! both right-hand-side entries, by the square root of its weight.

mod irls;
mod lsq;
mod ransac;
mod system;

pub use irls::{huber_multiplier, solve_irls_huber, IrlsParams};
pub use lsq::{solve_lsq, solve_weighted_lsq};
pub use ransac::{solve_ransac, RansacParams};
pub use system::{build_system, Conditioning, ConstraintSystem};

pub(crate) use lsq::solve_detail;
pub(crate) use system::{constraint_rows, Similarity};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2};

/// Pairs with weight at or below this do not count as support.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Threshold used for the inlier mask attached to least-squares reports.
pub const DEFAULT_INLIER_THRESHOLD: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub p: Point2,
    pub p_prime: Point2,
}

impl Correspondence {
    pub fn new(p: Point2, p_prime: Point2) -> Self {
        Self { p, p_prime }
    }
}

/// Point pairs `p ↦ p'` with optional per-pair weights in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
    weights: Option<Vec<f64>>,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>) -> Self {
        Self {
            pairs,
            weights: None,
        }
    }

    pub fn with_weights(pairs: Vec<Correspondence>, weights: Vec<f64>) -> Result<Self> {
        validate_weights(pairs.len(), &weights)?;
        Ok(Self {
            pairs,
            weights: Some(weights),
        })
    }

    pub fn from_points(src: &[Point2], dst: &[Point2]) -> Result<Self> {
        if src.len() != dst.len() {
            return Err(Error::LengthMismatch {
                expected: src.len(),
                actual: dst.len(),
            });
        }
        Ok(Self::new(
            src.iter()
                .zip(dst)
                .map(|(&p, &q)| Correspondence::new(p, q))
                .collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Weight of pair `i`, one when the set is unweighted.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        validate_weights(self.pairs.len(), &weights)?;
        self.weights = Some(weights);
        Ok(())
    }

    pub fn without_weights(&self) -> Self {
        Self::new(self.pairs.clone())
    }

    pub fn push(&mut self, pair: Correspondence, weight: Option<f64>) {
        self.pairs.push(pair);
        match (&mut self.weights, weight) {
            (Some(w), Some(x)) => w.push(x),
            (Some(w), None) => w.push(1.0),
            (None, Some(x)) => {
                let mut w = vec![1.0; self.pairs.len() - 1];
                w.push(x);
                self.weights = Some(w);
            }
            (None, None) => {}
        }
    }

    /// Subset by index, keeping weights.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            pairs: indices.iter().map(|&i| self.pairs[i]).collect(),
            weights: self
                .weights
                .as_ref()
                .map(|w| indices.iter().map(|&i| w[i]).collect()),
        }
    }

    /// Number of pairs whose weight exceeds [`WEIGHT_FLOOR`].
    pub fn effective_support(&self) -> usize {
        match &self.weights {
            None => self.pairs.len(),
            Some(w) => w.iter().filter(|&&x| x > WEIGHT_FLOOR).count(),
        }
    }
}

fn validate_weights(n: usize, weights: &[f64]) -> Result<()> {
    if weights.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: weights.len(),
        });
    }
    if let Some(bad) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::InvalidParameter(format!(
            "weight {bad} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Transfer error `‖H p − p'‖` per pair; pairs mapping to infinity get `+∞`.
pub fn transfer_errors(c: &CorrespondenceSet, h: &Homography) -> Vec<f64> {
    c.pairs()
        .iter()
        .map(|pair| match h.warp_point(pair.p) {
            Ok(q) => q.distance(&pair.p_prime),
            Err(_) => f64::INFINITY,
        })
        .collect()
}

/// Inlier mask at an inclusive threshold and the inlier fraction over all
/// pairs (zero for an empty set).
pub fn inlier_stats(c: &CorrespondenceSet, h: &Homography, threshold: f64) -> (Vec<bool>, f64) {
    let mask: Vec<bool> = transfer_errors(c, h).iter().map(|&r| r <= threshold).collect();
    let ratio = ratio_of(&mask);
    (mask, ratio)
}

fn ratio_of(mask: &[bool]) -> f64 {
    if mask.is_empty() {
        0.0
    } else {
        mask.iter().filter(|&&b| b).count() as f64 / mask.len() as f64
    }
}

/// Result of any estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorReport {
    pub homography: Homography,
    pub inlier_mask: Vec<bool>,
    pub inlier_ratio: f64,
    /// Transfer error in pixels per correspondence.
    pub residuals: Vec<f64>,
    /// Linear solves (IRLS) or hypotheses evaluated (RANSAC); one otherwise.
    pub iterations: usize,
    pub threshold: f64,
}

impl EstimatorReport {
    pub(crate) fn from_homography(
        c: &CorrespondenceSet,
        homography: Homography,
        threshold: f64,
        iterations: usize,
    ) -> Self {
        let residuals = transfer_errors(c, &homography);
        let inlier_mask: Vec<bool> = residuals.iter().map(|&r| r <= threshold).collect();
        let inlier_ratio = ratio_of(&inlier_mask);
        Self {
            homography,
            inlier_mask,
            inlier_ratio,
            residuals,
            iterations,
            threshold,
        }
    }

    /// Recomputes the inlier mask at another threshold.
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.inlier_mask = self.residuals.iter().map(|&r| r <= threshold).collect();
        self.inlier_ratio = ratio_of(&self.inlier_mask);
        self.threshold = threshold;
        self
    }
}

/// The estimators selectable by the tracker and the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    /// Plain least squares, weights ignored.
    Lsq,
    /// Weighted least squares.
    #[value(name = "weighted_lsq", alias = "weighted-lsq")]
    WeightedLsq,
    /// Weighted least squares refined by IRLS with a Huber loss.
    Irls,
    /// Hypothesize-and-verify on minimal samples, weights ignored.
    Ransac,
}

impl EstimatorChoice {
    pub const ALL: [EstimatorChoice; 4] = [
        EstimatorChoice::Lsq,
        EstimatorChoice::WeightedLsq,
        EstimatorChoice::Irls,
        EstimatorChoice::Ransac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorChoice::Lsq => "lsq",
            EstimatorChoice::WeightedLsq => "weighted_lsq",
            EstimatorChoice::Irls => "irls",
            EstimatorChoice::Ransac => "ransac",
        }
    }

    /// Whether the estimator consumes per-pair weights.
    pub fn uses_weights(self) -> bool {
        matches!(self, EstimatorChoice::WeightedLsq | EstimatorChoice::Irls)
    }
}

impl std::fmt::Display for EstimatorChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of every estimator, so callers can switch by [`EstimatorChoice`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub choice: EstimatorChoice,
    pub inlier_threshold: f64,
    pub irls: IrlsParams,
    pub ransac: RansacParams,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            choice: EstimatorChoice::WeightedLsq,
            inlier_threshold: DEFAULT_INLIER_THRESHOLD,
            irls: IrlsParams::default(),
            ransac: RansacParams::default(),
        }
    }
}

/// Runs the configured estimator. A set without weights is treated as
/// uniformly weighted by the weighted estimators.
pub fn estimate(c: &CorrespondenceSet, cfg: &EstimatorConfig, seed: u64) -> Result<EstimatorReport> {
    let report = match cfg.choice {
        EstimatorChoice::Lsq => solve_lsq(&c.without_weights(), Conditioning::Hartley)?,
        EstimatorChoice::WeightedLsq => {
            if c.weights().is_some() {
                solve_weighted_lsq(c)?
            } else {
                solve_lsq(c, Conditioning::Hartley)?
            }
        }
        EstimatorChoice::Irls => solve_irls_huber(c, &cfg.irls)?,
        EstimatorChoice::Ransac => {
            let params = RansacParams {
                threshold: cfg.inlier_threshold,
                ..cfg.ransac.clone()
            };
            solve_ransac(&c.without_weights(), &params, seed)?
        }
    };
    Ok(report.with_threshold(cfg.inlier_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_set(h: &Homography) -> CorrespondenceSet {
        let src: Vec<Point2> = (0..10)
            .map(|i| Point2::new(10.0 + 37.0 * i as f64, 20.0 + 13.0 * ((i * 7) % 10) as f64))
            .collect();
        let dst: Vec<Point2> = src.iter().map(|&p| h.warp_point(p).unwrap()).collect();
        CorrespondenceSet::from_points(&src, &dst).unwrap()
    }

    #[test]
    fn weights_are_validated() {
        let c = exact_set(&Homography::identity());
        let pairs = c.pairs().to_vec();
        assert!(CorrespondenceSet::with_weights(pairs.clone(), vec![0.5; 9]).is_err());
        let mut bad = vec![0.5; 10];
        bad[3] = 1.5;
        assert!(CorrespondenceSet::with_weights(pairs.clone(), bad).is_err());
        bad = vec![0.5; 10];
        bad[0] = -0.1;
        assert!(CorrespondenceSet::with_weights(pairs, bad).is_err());
    }

    #[test]
    fn inlier_stats_exact_and_boundary() {
        let h = Homography::translation(2.0, -1.0);
        let mut c = exact_set(&h);
        let (mask, ratio) = inlier_stats(&c, &h, 1e-3);
        assert!(mask.iter().all(|&b| b));
        assert_eq!(ratio, 1.0);

        // a pair exactly 5 px off (3-4-5 triangle) is an inlier at threshold 5
        let p = Point2::new(1.0, 1.0);
        let q = h.warp_point(p).unwrap() + Point2::new(3.0, 4.0);
        c.push(Correspondence::new(p, q), None);
        let (mask, _) = inlier_stats(&c, &h, 5.0);
        assert!(mask[10]);
        let (mask, _) = inlier_stats(&c, &h, 4.999);
        assert!(!mask[10]);
    }

    #[test]
    fn inlier_ratio_half_displaced() {
        let h = Homography::identity();
        let c = exact_set(&h);
        let displaced: Vec<Correspondence> = c
            .pairs()
            .iter()
            .enumerate()
            .map(|(i, pr)| {
                if i % 2 == 0 {
                    Correspondence::new(pr.p, pr.p_prime + Point2::new(10.0, 0.0))
                } else {
                    *pr
                }
            })
            .collect();
        let (_, ratio) = inlier_stats(&CorrespondenceSet::new(displaced), &h, 5.0);
        assert_eq!(ratio, 0.5);
        assert_eq!(inlier_stats(&CorrespondenceSet::default(), &h, 5.0).1, 0.0);
    }

    #[test]
    fn push_promotes_weights() {
        let mut c = CorrespondenceSet::default();
        let pr = Correspondence::new(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0));
        c.push(pr, None);
        c.push(pr, Some(0.25));
        assert_eq!(c.weights(), Some(&[1.0, 0.25][..]));
        assert_eq!(c.effective_support(), 2);
        c.push(pr, Some(0.0));
        assert_eq!(c.effective_support(), 2);
    }
}
