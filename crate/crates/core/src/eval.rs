//! Alignment error, precision curves and per-sequence reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2};
use crate::synth::SequenceRecord;

/// Thresholds reported by default (accuracy and robustness).
pub const DEFAULT_THRESHOLDS: [f64; 2] = [5.0, 15.0];
/// Precision curve sampling step and range.
pub const CURVE_STEP: f64 = 0.5;
pub const CURVE_MAX: f64 = 20.0;

/// RMS distance between the projections of four reference points under
/// the estimate and the ground truth.
pub fn alignment_error(h: &Homography, h_star: &Homography, ref_points: &[Point2; 4]) -> Result<f64> {
    let mut sum = 0.0;
    for &x in ref_points {
        let a = h_star.warp_point(x)?;
        let b = h.warp_point(x)?;
        let (dx, dy) = (a.x - b.x, a.y - b.y);
        sum += dx * dx + dy * dy;
    }
    Ok((sum / 4.0).sqrt())
}

/// Mean L1 (Euclidean) distance `‖p − H⁻¹ H_gt p‖` over the points.
pub fn reprojection_loss(h: &Homography, h_gt: &Homography, points: &[Point2]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyInput("loss points"));
    }
    let back = h.inverse()?;
    let mut sum = 0.0;
    for &p in points {
        let q = back.warp_point(h_gt.warp_point(p)?)?;
        sum += p.distance(&q);
    }
    Ok(sum / points.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPrecision {
    pub threshold: f64,
    pub precision: f64,
}

/// Fraction of errors at or below each threshold.
pub fn precision_at(errors: &[f64], thresholds: &[f64]) -> Result<Vec<ThresholdPrecision>> {
    if errors.is_empty() {
        return Err(Error::EmptyInput("error list"));
    }
    let n = errors.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| ThresholdPrecision {
            threshold: t,
            precision: errors.iter().filter(|&&e| e <= t).count() as f64 / n,
        })
        .collect())
}

pub fn curve_thresholds() -> Vec<f64> {
    let steps = (CURVE_MAX / CURVE_STEP).round() as usize;
    (0..=steps).map(|i| i as f64 * CURVE_STEP).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub count: usize,
    pub total_ms: f64,
    pub mean_ms: f64,
}

impl StageTiming {
    pub fn record(&mut self, ms: f64) {
        self.count += 1;
        self.total_ms += ms;
        self.mean_ms = self.total_ms / self.count as f64;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` where the frame has no ground truth.
    pub per_frame_e_al: Vec<Option<f64>>,
    pub p_at: Vec<ThresholdPrecision>,
    pub curve: Vec<ThresholdPrecision>,
    #[serde(default)]
    pub runtime: BTreeMap<String, StageTiming>,
}

impl EvalReport {
    pub fn precision(&self, threshold: f64) -> Option<f64> {
        self.p_at
            .iter()
            .chain(&self.curve)
            .find(|tp| tp.threshold == threshold)
            .map(|tp| tp.precision)
    }

    pub fn scored_errors(&self) -> Vec<f64> {
        self.per_frame_e_al.iter().flatten().copied().collect()
    }
}

/// Scores estimated poses against optional per-frame ground truth.
pub fn evaluate_poses(
    gt: &[Option<Homography>],
    poses: &[Homography],
    ref_points: &[Point2; 4],
    thresholds: &[f64],
) -> Result<EvalReport> {
    if gt.len() != poses.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            actual: poses.len(),
        });
    }
    let per_frame_e_al = gt
        .iter()
        .zip(poses)
        .map(|(g, h)| match g {
            Some(g) => alignment_error(h, g, ref_points).map(Some),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = per_frame_e_al.iter().flatten().copied().collect();
    Ok(EvalReport {
        p_at: precision_at(&errors, thresholds)?,
        curve: precision_at(&errors, &curve_thresholds())?,
        per_frame_e_al,
        runtime: BTreeMap::new(),
    })
}

/// Per-frame alignment error against the generated ground truth, using the
/// template mask's bounding-box corners as reference points.
pub fn evaluate_sequence(seq: &SequenceRecord, poses: &[Homography]) -> Result<EvalReport> {
    let refs = seq
        .template_mask
        .bounding_quad()
        .ok_or(Error::EmptyMask(0))?;
    let gt: Vec<Option<Homography>> = seq.gt_poses.iter().copied().map(Some).collect();
    evaluate_poses(&gt, poses, &refs, &DEFAULT_THRESHOLDS)
}

/// Pooled and per-sequence precision over several sequences.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateReport {
    pub sequences: Vec<NamedReport>,
    /// Precision over all scored frames pooled together.
    pub pooled: Vec<ThresholdPrecision>,
    /// Mean of per-sequence precisions.
    pub mean_per_sequence: Vec<ThresholdPrecision>,
    pub pooled_curve: Vec<ThresholdPrecision>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedReport {
    pub name: String,
    pub report: EvalReport,
}

pub fn aggregate(sequences: Vec<NamedReport>, thresholds: &[f64]) -> Result<AggregateReport> {
    if sequences.is_empty() {
        return Err(Error::EmptyInput("sequence reports"));
    }
    let all: Vec<f64> = sequences.iter().flat_map(|s| s.report.scored_errors()).collect();
    let pooled = precision_at(&all, thresholds)?;
    let pooled_curve = precision_at(&all, &curve_thresholds())?;
    let mut mean_per_sequence = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut acc = 0.0;
        for s in &sequences {
            acc += precision_at(&s.report.scored_errors(), &[t])?[0].precision;
        }
        mean_per_sequence.push(ThresholdPrecision {
            threshold: t,
            precision: acc / sequences.len() as f64,
        });
    }
    Ok(AggregateReport {
        sequences,
        pooled,
        mean_per_sequence,
        pooled_curve,
    })
}

/// `threshold,precision` rows, `.` decimal separator.
pub fn curve_csv(curve: &[ThresholdPrecision]) -> String {
    let mut out = String::from("threshold,precision\n");
    for tp in curve {
        out.push_str(&format!("{},{}\n", tp.threshold, tp.precision));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn refs() -> [Point2; 4] {
        [
            Point2::new(80.0, 60.0),
            Point2::new(240.0, 60.0),
            Point2::new(240.0, 180.0),
            Point2::new(80.0, 180.0),
        ]
    }

    fn h(v: [f64; 8]) -> Homography {
        Homography::from_params(&v).unwrap()
    }

    #[test]
    fn alignment_error_closed_forms() {
        let g = h([1.02, 0.01, 3.0, -0.02, 0.99, 1.0, 1e-4, 2e-5]);
        assert_eq!(alignment_error(&g, &g, &refs()).unwrap(), 0.0);
        let t = Homography::translation(3.0, 4.0);
        assert_eq!(alignment_error(&t, &Homography::identity(), &refs()).unwrap(), 5.0);
    }

    #[test]
    fn alignment_error_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let mut r = || rng.random_range(-1.0..1.0);
            let a = [1.0 + 0.1 * r(), 0.1 * r(), 20.0 * r(), 0.1 * r(), 1.0 + 0.1 * r(), 20.0 * r(), 1e-4 * r(), 1e-4 * r(), 1.0];
            let b = [1.0 + 0.1 * r(), 0.1 * r(), 20.0 * r(), 0.1 * r(), 1.0 + 0.1 * r(), 20.0 * r(), 1e-4 * r(), 1e-4 * r(), 1.0];
            // second implementation: explicit homogeneous arithmetic on arrays
            let proj = |m: &[f64; 9], p: &Point2| {
                let w = m[6] * p.x + m[7] * p.y + m[8];
                ((m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w)
            };
            let mut s = 0.0;
            for p in refs().iter() {
                let (ax, ay) = proj(&a, p);
                let (bx, by) = proj(&b, p);
                s += (ax - bx).powi(2) + (ay - by).powi(2);
            }
            let direct = (s / 4.0).sqrt();
            let ha = Homography::from_row_major(&a).unwrap();
            let hb = Homography::from_row_major(&b).unwrap();
            let e = alignment_error(&ha, &hb, &refs()).unwrap();
            assert!((e - direct).abs() < 1e-9);
            assert!((e - alignment_error(&hb, &ha, &refs()).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn reprojection_loss_translation() {
        let pts: Vec<Point2> = (0..7).map(|i| Point2::new(i as f64 * 13.0, 50.0 - i as f64)).collect();
        let t = Homography::translation(-6.0, 8.0);
        let l = reprojection_loss(&t, &Homography::identity(), &pts).unwrap();
        assert_eq!(l, 10.0);
        assert_eq!(reprojection_loss(&t, &t, &pts).unwrap(), 0.0);
        assert!(reprojection_loss(&t, &t, &[]).is_err());
    }

    #[test]
    fn reprojection_loss_matches_direct_evaluation() {
        let a = h([1.05, 0.02, 4.0, -0.01, 0.97, -3.0, 1e-4, -1e-4]);
        let g = h([0.98, -0.03, -2.0, 0.02, 1.03, 5.0, -5e-5, 2e-4]);
        let pts: Vec<Point2> = (0..10).map(|i| Point2::new(30.0 * i as f64, 20.0 + 11.0 * i as f64)).collect();
        let inv = a.matrix().try_inverse().unwrap();
        let m = inv * g.matrix();
        let mut s = 0.0;
        for p in &pts {
            let v = m * nalgebra::Vector3::new(p.x, p.y, 1.0);
            s += ((p.x - v.x / v.z).powi(2) + (p.y - v.y / v.z).powi(2)).sqrt();
        }
        let direct = s / pts.len() as f64;
        assert!((reprojection_loss(&a, &g, &pts).unwrap() - direct).abs() < 1e-9);
    }

    #[test]
    fn precision_semantics() {
        let e = [1.0, 2.0, 3.0, 10.0];
        let p = precision_at(&e, &[5.0, 15.0, 3.0]).unwrap();
        assert_eq!(p[0].precision, 0.75);
        assert_eq!(p[1].precision, 1.0);
        assert_eq!(p[2].precision, 0.75);
        assert!(matches!(precision_at(&[], &[5.0]), Err(Error::EmptyInput(_))));
        let curve = precision_at(&e, &curve_thresholds()).unwrap();
        assert_eq!(curve.len(), 41);
        assert!(curve.windows(2).all(|w| w[0].precision <= w[1].precision));
    }

    #[test]
    fn evaluate_poses_boundaries_and_missing_gt() {
        let gt: Vec<Option<Homography>> = vec![Some(Homography::identity()), None, Some(Homography::translation(1.0, 0.0))];
        let shifted: Vec<Homography> = gt
            .iter()
            .map(|g| g.unwrap_or(Homography::identity()).compose(&Homography::translation(3.0, 4.0)).unwrap())
            .collect();
        let r = evaluate_poses(&gt, &shifted, &refs(), &[5.0, 4.9]).unwrap();
        assert_eq!(r.per_frame_e_al[1], None);
        assert_eq!(r.p_at[0].precision, 1.0);
        assert_eq!(r.p_at[1].precision, 0.0);
        assert!(evaluate_poses(&gt, &shifted[..2], &refs(), &[5.0]).is_err());
    }

    #[test]
    fn aggregate_pools_frames() {
        let mk = |errs: Vec<f64>| NamedReport {
            name: "s".into(),
            report: EvalReport {
                p_at: vec![],
                curve: vec![],
                per_frame_e_al: errs.into_iter().map(Some).collect(),
                runtime: BTreeMap::new(),
            },
        };
        let agg = aggregate(vec![mk(vec![1.0, 10.0]), mk(vec![1.0, 1.0, 1.0, 1.0])], &[5.0]).unwrap();
        assert!((agg.pooled[0].precision - 5.0 / 6.0).abs() < 1e-12);
        assert!((agg.mean_per_sequence[0].precision - 0.75).abs() < 1e-12);
        assert!(curve_csv(&agg.pooled_curve).starts_with("threshold,precision\n0,"));
    }
}
