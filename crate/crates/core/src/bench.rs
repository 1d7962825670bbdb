//! Seeded benchmark suites shared by the acceptance tests, the CLI and the
//! examples: correspondence-level contamination instances and tracked
//! synthetic sequences under configurable flow models.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Correspondence, CorrespondenceSet, EstimatorChoice};
use crate::eval::{evaluate_poses, EvalReport, DEFAULT_THRESHOLDS};
use crate::flow::{
    synthetic_flow, weights_fb_consistency, ContaminationSpec, FlowProvider,
    ForwardBackwardWeights, SyntheticFlowProvider, UniformWeights, WeightProvider,
};
use crate::geometry::{Homography, Point2};
use crate::seeds::sub_seed;
use crate::synth::{procedural_texture, random_homography, PairSpec, SequencePlan};
use crate::tracker::{FrameResult, PreWarpMode, TrackStatus, TrackerConfig, TrackerState};

/// Correspondence-level robustness suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSuiteSpec {
    pub count: usize,
    pub size: (usize, usize),
    pub corner_frac: f64,
    pub noise_sigma: f64,
    pub outlier_fraction: f64,
    pub outlier_magnitude: f64,
    pub max_samples: usize,
    pub fb_sigma: f64,
    pub seed: u64,
}

impl Default for InstanceSuiteSpec {
    fn default() -> Self {
        Self {
            count: 100,
            size: (640, 480),
            corner_frac: 0.2,
            noise_sigma: 0.5,
            outlier_fraction: 0.4,
            outlier_magnitude: 100.0,
            max_samples: 500,
            fb_sigma: 2.0,
            seed: 2024,
        }
    }
}

/// One sampled problem with its labels and heuristic weights.
#[derive(Clone, Debug)]
pub struct ContaminatedInstance {
    pub h_gt: Homography,
    /// Unweighted pairs sampled from the forward field.
    pub correspondences: CorrespondenceSet,
    /// True where the forward vector was replaced by a random one.
    pub outlier: Vec<bool>,
    /// Forward–backward weights at the sampled pixels.
    pub fb_weights: Vec<f64>,
}

impl ContaminatedInstance {
    pub fn with_fb_weights(&self) -> CorrespondenceSet {
        let mut c = self.correspondences.clone();
        c.set_weights(self.fb_weights.clone()).expect("weights come from a weight field");
        c
    }

    pub fn with_oracle_weights(&self) -> CorrespondenceSet {
        let mut c = self.correspondences.clone();
        c.set_weights(self.outlier.iter().map(|&o| if o { 0.0 } else { 1.0 }).collect())
            .expect("0/1 weights are valid");
        c
    }

    pub fn inliers_only(&self) -> CorrespondenceSet {
        let idx: Vec<usize> = (0..self.outlier.len()).filter(|&i| !self.outlier[i]).collect();
        self.correspondences.select(&idx)
    }

    /// Distance between the estimate and the truth at each true inlier.
    pub fn inlier_errors(&self, h: &Homography) -> Vec<f64> {
        self.correspondences
            .pairs()
            .iter()
            .zip(&self.outlier)
            .filter(|(_, &o)| !o)
            .map(|(p, _)| match (h.warp_point(p.p), self.h_gt.warp_point(p.p)) {
                (Ok(a), Ok(b)) => a.distance(&b),
                _ => f64::INFINITY,
            })
            .collect()
    }
}

/// Builds the instances of a suite.
pub fn contamination_suite(spec: &InstanceSuiteSpec) -> Result<Vec<ContaminatedInstance>> {
    (0..spec.count).map(|i| contaminated_instance(spec, i)).collect()
}

pub fn contaminated_instance(spec: &InstanceSuiteSpec, index: usize) -> Result<ContaminatedInstance> {
    let i = index as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(spec.seed, "instance", i));
    let h_gt = random_homography(spec.size, spec.corner_frac, &mut rng)?;
    let forward = ContaminationSpec {
        noise_sigma: spec.noise_sigma,
        outlier_fraction: spec.outlier_fraction,
        outlier_magnitude: spec.outlier_magnitude,
        rng_seed: sub_seed(spec.seed, "forward", i),
    };
    // the labelled outliers live in the forward field; the reverse field is
    // noisy but otherwise true, so a clean vector checks against clean ones
    let backward = ContaminationSpec {
        outlier_fraction: 0.0,
        rng_seed: sub_seed(spec.seed, "backward", i),
        ..forward.clone()
    };
    let fwd = synthetic_flow(&h_gt, spec.size, &forward)?;
    let bwd = synthetic_flow(&h_gt.inverse()?, spec.size, &backward)?;
    let w = weights_fb_consistency(&fwd.field, &bwd.field, spec.fb_sigma)?;
    // stratified draw so the sampled outlier share is exact; endpoints may
    // leave the image, which the estimators do not care about
    let (width, height) = spec.size;
    let (bad, good): (Vec<usize>, Vec<usize>) =
        (0..width * height).partition(|&k| fwd.outliers.get(k % width, k / width));
    let n_bad = ((spec.max_samples as f64 * spec.outlier_fraction).round() as usize).min(bad.len());
    let n_good = (spec.max_samples - n_bad).min(good.len());
    let mut pick_rng = ChaCha8Rng::seed_from_u64(sub_seed(spec.seed, "subsample", i));
    let mut picked: Vec<(usize, bool)> = sample(&mut pick_rng, bad.len(), n_bad)
        .iter()
        .map(|j| (bad[j], true))
        .chain(sample(&mut pick_rng, good.len(), n_good).iter().map(|j| (good[j], false)))
        .collect();
    picked.sort_unstable();
    let mut pairs = Vec::with_capacity(picked.len());
    let mut outlier = Vec::with_capacity(picked.len());
    let mut fb_weights = Vec::with_capacity(picked.len());
    for &(k, o) in &picked {
        let (x, y) = (k % width, k / width);
        let (u, v) = fwd.field.get(x, y).expect("synthetic fields are dense");
        let p = Point2::new(x as f64, y as f64);
        pairs.push(Correspondence::new(p, Point2::new(p.x + u, p.y + v)));
        outlier.push(o);
        fb_weights.push(w.get(x, y));
    }
    Ok(ContaminatedInstance {
        h_gt,
        correspondences: CorrespondenceSet::new(pairs),
        outlier,
        fb_weights,
    })
}

/// Occlusion-like events: every flow field touching a burst frame is random.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurstSpec {
    pub count: usize,
    pub min_len: usize,
    pub max_len: usize,
}

/// How synthetic flow departs from the truth in a sequence suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    pub noise_sigma: f64,
    pub outlier_fraction: f64,
    pub outlier_magnitude: f64,
    /// Outliers share one wrong offset per field instead of pointing anywhere.
    pub coherent_outliers: bool,
    /// Amplitude of the smooth per-field error, pixels.
    pub bias: f64,
    pub capture_radius: Option<f64>,
    pub bursts: Option<BurstSpec>,
    /// Rigidly moving occluder inside burst fields, as an area fraction.
    pub occluder_fraction: f64,
}

impl FlowModel {
    pub fn clean() -> Self {
        Self {
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            outlier_magnitude: 0.0,
            coherent_outliers: false,
            bias: 0.0,
            capture_radius: None,
            bursts: None,
            occluder_fraction: 0.0,
        }
    }

    /// 20 % random vectors on top of unit Gaussian noise.
    pub fn contaminated() -> Self {
        Self {
            noise_sigma: 1.0,
            outlier_fraction: 0.2,
            outlier_magnitude: 50.0,
            ..Self::clean()
        }
    }

    /// Failure modes real flow shows, on top of noise: outliers that
    /// agree with each other, smooth bias, a limited capture range and
    /// short occlusion bursts during which a rigid occluder covers part of
    /// the target and the rest of the field is garbage.
    pub fn ablation() -> Self {
        Self {
            noise_sigma: 1.0,
            outlier_fraction: 0.2,
            outlier_magnitude: 25.0,
            coherent_outliers: true,
            bias: 0.3,
            capture_radius: Some(25.0),
            bursts: Some(BurstSpec {
                count: 2,
                min_len: 3,
                max_len: 6,
            }),
            occluder_fraction: 0.15,
        }
    }

    /// Provider for one sequence; the seed fixes noise and burst placement.
    pub fn provider(&self, poses: &[Homography], seed: u64) -> SyntheticFlowProvider {
        let mut p = SyntheticFlowProvider::new(poses.to_vec())
            .with_contamination(ContaminationSpec {
                noise_sigma: self.noise_sigma,
                outlier_fraction: self.outlier_fraction,
                outlier_magnitude: self.outlier_magnitude,
                rng_seed: seed,
            })
            .with_bias(self.bias)
            .with_occluder(self.occluder_fraction);
        if self.coherent_outliers {
            p = p.with_coherent_outliers();
        }
        if let Some(r) = self.capture_radius {
            p = p.with_capture_radius(r);
        }
        if let Some(b) = &self.bursts {
            p = p.with_corrupted_frames(burst_frames(b, poses.len(), sub_seed(seed, "bursts", 0)));
        }
        p
    }
}

fn burst_frames(b: &BurstSpec, len: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    if len < 40 || b.max_len == 0 {
        return out;
    }
    for _ in 0..b.count {
        let l = rng.random_range(b.min_len..=b.max_len.max(b.min_len));
        let start = rng.random_range(20..len.saturating_sub(l + 10).max(21));
        out.extend(start..(start + l).min(len));
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Generated sequences for tracking runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSuiteSpec {
    pub count: usize,
    pub length: usize,
    pub size: (usize, usize),
    pub motion: f64,
    pub pair: PairSpec,
    pub seed: u64,
}

impl Default for SequenceSuiteSpec {
    fn default() -> Self {
        Self {
            count: 20,
            length: 501,
            size: (240, 180),
            motion: 0.5,
            pair: PairSpec::default(),
            seed: 7,
        }
    }
}

impl SequenceSuiteSpec {
    pub fn quick() -> Self {
        Self {
            count: 4,
            length: 121,
            size: (160, 120),
            ..Self::default()
        }
    }

    pub fn plan(&self, index: usize) -> Result<SequencePlan> {
        let i = index as u64;
        let texture = procedural_texture(self.size.0, self.size.1, sub_seed(self.seed, "texture", i));
        let pair = PairSpec {
            rng_seed: sub_seed(self.seed, "sequence", i),
            ..self.pair.clone()
        };
        SequencePlan::new(texture, self.length, self.motion, &pair)
    }

    pub fn flow_seed(&self, index: usize) -> u64 {
        sub_seed(self.seed, "flow", index as u64)
    }
}

/// Which weight provider feeds a weighted estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// All ones.
    Uniform,
    /// Forward–backward consistency with σ = 2 px.
    #[default]
    Fb,
}

impl WeightKind {
    pub fn provider(self) -> Box<dyn WeightProvider> {
        match self {
            WeightKind::Uniform => Box::new(UniformWeights),
            WeightKind::Fb => Box::new(ForwardBackwardWeights::default()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightKind::Uniform => "uniform",
            WeightKind::Fb => "fb",
        }
    }
}

/// One tracker configuration in a multi-run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub weights: WeightKind,
}

/// Tracks one planned sequence under several configurations, rendering
/// each frame once. Results include frame 0.
pub fn track_plan(plan: &SequencePlan, flow: &dyn FlowProvider, runs: &[RunConfig]) -> Result<Vec<Vec<FrameResult>>> {
    let jobs: Vec<(&dyn FlowProvider, &RunConfig)> = runs.iter().map(|r| (flow, r)).collect();
    track_plan_with(plan, &jobs)
}

/// Like [`track_plan`], with a flow provider per configuration.
pub fn track_plan_with(plan: &SequencePlan, runs: &[(&dyn FlowProvider, &RunConfig)]) -> Result<Vec<Vec<FrameResult>>> {
    let template = plan.render(0)?;
    let providers: Vec<Box<dyn WeightProvider>> = runs.iter().map(|(_, r)| r.weights.provider()).collect();
    let mut states = runs
        .iter()
        .map(|(_, r)| TrackerState::init(&template, plan.template_mask(), r.tracker.clone()))
        .collect::<Result<Vec<_>>>()?;
    let first = FrameResult {
        frame_index: 0,
        pose: Homography::identity(),
        status: TrackStatus::Tracking,
        inlier_ratio: 1.0,
        used_local_fallback: false,
        local_homography: None,
        correspondences: 0,
    };
    let mut out: Vec<Vec<FrameResult>> = runs.iter().map(|_| vec![first.clone()]).collect();
    for t in 1..plan.len() {
        let frame = plan.render(t)?;
        for (((state, w), res), (flow, _)) in states.iter_mut().zip(&providers).zip(out.iter_mut()).zip(runs) {
            res.push(state.step(&frame, *flow, w.as_ref())?);
        }
    }
    Ok(out)
}

pub fn evaluate_run(plan: &SequencePlan, results: &[FrameResult]) -> Result<EvalReport> {
    let refs = plan.template_mask().bounding_quad().ok_or(Error::EmptyMask(0))?;
    let gt: Vec<Option<Homography>> = plan.gt_poses().iter().copied().map(Some).collect();
    let poses: Vec<Homography> = results.iter().map(|r| r.pose).collect();
    evaluate_poses(&gt, &poses, &refs, &DEFAULT_THRESHOLDS)
}

/// Per-sequence reports for every configuration: `reports[run][sequence]`.
pub fn run_suite(suite: &SequenceSuiteSpec, model: &FlowModel, runs: &[RunConfig], jobs: usize) -> Result<Vec<Vec<EvalReport>>> {
    let paired: Vec<(FlowModel, RunConfig)> = runs.iter().map(|r| (model.clone(), r.clone())).collect();
    run_suite_with(suite, &paired, jobs)
}

/// Like [`run_suite`], with a flow model per configuration. Frames are
/// still rendered once per sequence.
pub fn run_suite_with(suite: &SequenceSuiteSpec, runs: &[(FlowModel, RunConfig)], jobs: usize) -> Result<Vec<Vec<EvalReport>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let per_seq: Vec<Vec<EvalReport>> = pool.install(|| {
        (0..suite.count)
            .into_par_iter()
            .map(|i| {
                let plan = suite.plan(i)?;
                let flows: Vec<SyntheticFlowProvider> =
                    runs.iter().map(|(m, _)| m.provider(plan.gt_poses(), suite.flow_seed(i))).collect();
                let jobs: Vec<(&dyn FlowProvider, &RunConfig)> =
                    flows.iter().zip(runs).map(|(f, (_, r))| (f as &dyn FlowProvider, r)).collect();
                let results = track_plan_with(&plan, &jobs)?;
                results.iter().map(|r| evaluate_run(&plan, r)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok((0..runs.len())
        .map(|r| per_seq.iter().map(|s| s[r].clone()).collect())
        .collect())
}

/// Mean of per-sequence precision at `threshold`.
pub fn mean_precision(reports: &[EvalReport], threshold: f64) -> f64 {
    let v: Vec<f64> = reports.iter().filter_map(|r| r.precision(threshold)).collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// One row of the ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub estimator: EstimatorChoice,
    pub weights: Option<WeightKind>,
    pub pre_warp: PreWarpMode,
    pub p_at_5: f64,
    pub p_at_15: f64,
}

/// Weighted estimators get forward–backward weights; the others none.
pub fn ablation_runs(base: &TrackerConfig, estimators: &[EstimatorChoice], modes: &[PreWarpMode]) -> Vec<RunConfig> {
    let mut runs = Vec::new();
    for &estimator in estimators {
        for &pre_warp in modes {
            runs.push(RunConfig {
                tracker: TrackerConfig {
                    estimator,
                    pre_warp,
                    ..base.clone()
                },
                weights: if estimator.uses_weights() { WeightKind::Fb } else { WeightKind::Uniform },
            });
        }
    }
    runs
}

pub fn run_ablation(
    suite: &SequenceSuiteSpec,
    model: &FlowModel,
    base: &TrackerConfig,
    estimators: &[EstimatorChoice],
    modes: &[PreWarpMode],
    jobs: usize,
) -> Result<Vec<AblationRow>> {
    let runs = ablation_runs(base, estimators, modes);
    let reports = run_suite(suite, model, &runs, jobs)?;
    Ok(runs
        .iter()
        .zip(&reports)
        .map(|(run, reps)| AblationRow {
            estimator: run.tracker.estimator,
            weights: run.tracker.estimator.uses_weights().then_some(run.weights),
            pre_warp: run.tracker.pre_warp,
            p_at_5: mean_precision(reps, 5.0),
            p_at_15: mean_precision(reps, 15.0),
        })
        .collect())
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("estimator,weights,pre_warp,p_at_5,p_at_15\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.4},{:.4}\n",
            r.estimator,
            r.weights.map_or("none", |w| w.name()),
            r.pre_warp,
            r.p_at_5,
            r.p_at_15
        ));
    }
    s
}

/// Ordering violations, in points of P@5: pre-warp modes must rank
/// controlled > always > never and weighted LSq must beat plain LSq, each
/// by at least `margin`.
pub fn ablation_violations(rows: &[AblationRow], margin: f64) -> Vec<String> {
    let find = |e: EstimatorChoice, m: PreWarpMode| rows.iter().find(|r| r.estimator == e && r.pre_warp == m).map(|r| 100.0 * r.p_at_5);
    let mut out = Vec::new();
    for e in [EstimatorChoice::Lsq, EstimatorChoice::WeightedLsq] {
        for (hi, lo) in [(PreWarpMode::Controlled, PreWarpMode::Always), (PreWarpMode::Always, PreWarpMode::Never)] {
            if let (Some(a), Some(b)) = (find(e, hi), find(e, lo)) {
                if a < b + margin {
                    out.push(format!("{e}: {hi} {a:.1} not above {lo} {b:.1} by {margin}"));
                }
            }
        }
    }
    for m in PreWarpMode::ALL {
        if let (Some(a), Some(b)) = (find(EstimatorChoice::WeightedLsq, m), find(EstimatorChoice::Lsq, m)) {
            if a < b + margin {
                out.push(format!("{m}: weighted_lsq {a:.1} not above lsq {b:.1} by {margin}"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{solve_lsq, solve_weighted_lsq, Conditioning};

    #[test]
    fn instances_are_labelled_and_seeded() {
        let spec = InstanceSuiteSpec {
            count: 2,
            size: (160, 120),
            ..InstanceSuiteSpec::default()
        };
        let a = contamination_suite(&spec).unwrap();
        let b = contamination_suite(&spec).unwrap();
        assert_eq!(a[0].correspondences, b[0].correspondences);
        for inst in &a {
            assert_eq!(inst.correspondences.len(), 500);
            let frac = inst.outlier.iter().filter(|&&o| o).count() as f64 / 500.0;
            assert!((frac - 0.4).abs() < 1e-12);
            let (mut on_bad, mut on_good) = (Vec::new(), Vec::new());
            let pairs = inst.correspondences.pairs();
            for ((&w, &o), c) in inst.fb_weights.iter().zip(&inst.outlier).zip(pairs) {
                // inliers mapped off the frame have no reverse vector to check
                let inside = (0.0..=159.0).contains(&c.p_prime.x) && (0.0..=119.0).contains(&c.p_prime.y);
                if o {
                    on_bad.push(w)
                } else if inside {
                    on_good.push(w)
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            assert!(mean(&on_bad) < 0.05 && mean(&on_good) > 0.8);
            let oracle = solve_weighted_lsq(&inst.with_oracle_weights()).unwrap().homography;
            let only = solve_lsq(&inst.inliers_only(), Conditioning::Hartley).unwrap().homography;
            assert!(oracle.max_abs_diff(&only) < 1e-9);
        }
    }

    #[test]
    fn bursts_stay_inside() {
        let b = BurstSpec { count: 3, min_len: 2, max_len: 5 };
        let f = burst_frames(&b, 100, 1);
        assert!(!f.is_empty() && f.len() <= 15);
        assert!(f.iter().all(|&t| (20..100).contains(&t)));
        assert!(burst_frames(&b, 10, 1).is_empty());
    }

    #[test]
    fn ablation_table_shape() {
        let suite = SequenceSuiteSpec {
            count: 1,
            length: 6,
            size: (64, 48),
            ..SequenceSuiteSpec::default()
        };
        let rows = run_ablation(&suite, &FlowModel::clean(), &TrackerConfig::default(), &EstimatorChoice::ALL, &PreWarpMode::ALL, 1).unwrap();
        assert_eq!(rows.len(), 12);
        let csv = ablation_csv(&rows);
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.starts_with("estimator,weights,pre_warp,p_at_5,p_at_15\n"));
        assert!(rows.iter().filter(|r| r.pre_warp != PreWarpMode::Never).all(|r| r.p_at_5 == 1.0));
    }
}
