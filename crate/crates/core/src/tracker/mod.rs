//! The tracking state machine: pre-warp, global flow against the template,
//! a reliability gate, local-flow fallback and reset.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    estimate, inlier_stats, CorrespondenceSet, EstimatorChoice, EstimatorConfig, IrlsParams, RansacParams,
    DEFAULT_INLIER_THRESHOLD,
};
use crate::eval::StageTiming;
use crate::flow::{flow_to_correspondences_with, FlowProvider, FlowRequest, SampleOptions, WeightProvider};
use crate::geometry::{warp_image, Homography, ImageBuffer, Mask};
use crate::seeds::sub_seed;

/// When the current frame is pre-warped before global flow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PreWarpMode {
    /// No global flow; every pose is chained from consecutive-frame flow.
    Never,
    /// Pre-warp by the previous output pose, whatever its status.
    Always,
    /// Pre-warp by the last reliable pose.
    #[default]
    Controlled,
}

impl PreWarpMode {
    pub const ALL: [PreWarpMode; 3] = [PreWarpMode::Never, PreWarpMode::Always, PreWarpMode::Controlled];

    pub fn name(self) -> &'static str {
        match self {
            PreWarpMode::Never => "never",
            PreWarpMode::Always => "always",
            PreWarpMode::Controlled => "controlled",
        }
    }
}

impl fmt::Display for PreWarpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tracking,
    Lost,
}

impl fmt::Display for TrackStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrackStatus::Tracking => "tracking",
            TrackStatus::Lost => "lost",
        })
    }
}

impl FromStr for TrackStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tracking" => Ok(TrackStatus::Tracking),
            "lost" => Ok(TrackStatus::Lost),
            other => Err(Error::parse("status", format!("unknown status {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Inlier transfer-error bound in working-resolution pixels.
    pub inlier_threshold: f64,
    /// Frames with an inlier ratio strictly below this are lost.
    pub lost_ratio: f64,
    /// Lost streak length tolerated before the pre-warp resets to identity.
    pub max_lost_frames: usize,
    pub max_correspondences: usize,
    pub downscale_factor: usize,
    pub estimator: EstimatorChoice,
    pub pre_warp: PreWarpMode,
    pub irls: IrlsParams,
    pub ransac: RansacParams,
    pub rng_seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: DEFAULT_INLIER_THRESHOLD,
            lost_ratio: 0.20,
            max_lost_frames: 10,
            max_correspondences: 500,
            downscale_factor: 1,
            estimator: EstimatorChoice::WeightedLsq,
            pre_warp: PreWarpMode::Controlled,
            irls: IrlsParams::default(),
            ransac: RansacParams::default(),
            rng_seed: 0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.inlier_threshold > 0.0 && self.inlier_threshold.is_finite()) {
            return bad(format!("inlier threshold {} must be positive", self.inlier_threshold));
        }
        if !(self.lost_ratio > 0.0 && self.lost_ratio < 1.0) {
            return bad(format!("lost ratio {} outside (0, 1)", self.lost_ratio));
        }
        if self.max_correspondences < 4 {
            return bad(format!("max correspondences {} below 4", self.max_correspondences));
        }
        if self.downscale_factor == 0 {
            return bad("downscale factor must be at least 1".into());
        }
        Ok(())
    }

    fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            choice: self.estimator,
            inlier_threshold: self.inlier_threshold,
            irls: self.irls.clone(),
            ransac: self.ransac.clone(),
        }
    }
}

/// Outcome of one tracked frame. The pose is always present.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameResult {
    pub frame_index: usize,
    /// `H₀→t` at full resolution.
    pub pose: Homography,
    pub status: TrackStatus,
    pub inlier_ratio: f64,
    pub used_local_fallback: bool,
    /// `H(t−1)→t` at full resolution when local flow produced the pose.
    pub local_homography: Option<Homography>,
    /// Correspondences fed to the global (or, in `never` mode, local) estimate.
    pub correspondences: usize,
}

/// Everything the tracker carries from frame to frame.
#[derive(Clone, Debug)]
pub struct TrackerState {
    config: TrackerConfig,
    full_size: (usize, usize),
    template: ImageBuffer,
    mask: Mask,
    prev_frame: ImageBuffer,
    frame_index: usize,
    pub last_good_index: usize,
    pub last_good_pose: Homography,
    pub lost_streak: usize,
    pub last_output: Homography,
    pub status: TrackStatus,
    timings: BTreeMap<String, StageTiming>,
}

fn timed<T>(timings: &mut BTreeMap<String, StageTiming>, stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings
        .entry(stage.to_string())
        .or_default()
        .record(start.elapsed().as_secs_f64() * 1e3);
    out
}

struct Estimate {
    homography: Option<Homography>,
    ratio: f64,
    count: usize,
}

fn to_working(img: &ImageBuffer, s: usize) -> Result<ImageBuffer> {
    let g = img.to_gray();
    if s == 1 {
        Ok(g)
    } else {
        g.downscale(s)
    }
}

impl TrackerState {
    /// Starts tracking the masked region of `template` (frame 0).
    pub fn init(template: &ImageBuffer, mask: &Mask, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        if mask.size() != template.size() {
            return Err(Error::ImageSizeMismatch {
                expected: template.size(),
                actual: mask.size(),
            });
        }
        let s = config.downscale_factor;
        let work = to_working(template, s)?;
        let small_mask = if s == 1 { mask.clone() } else { mask.downscale(s) };
        if small_mask.count() < 4 || !has_spread(&small_mask) {
            return Err(Error::EmptyMask(small_mask.count()));
        }
        Ok(Self {
            config,
            full_size: template.size(),
            template: work.clone(),
            mask: small_mask,
            prev_frame: work,
            frame_index: 0,
            last_good_index: 0,
            last_good_pose: Homography::identity(),
            lost_streak: 0,
            last_output: Homography::identity(),
            status: TrackStatus::Tracking,
            timings: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Index of the last processed frame (0 right after init).
    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    /// Template mask at working resolution.
    pub fn working_mask(&self) -> &Mask {
        &self.mask
    }

    pub fn timings(&self) -> &BTreeMap<String, StageTiming> {
        &self.timings
    }


    fn to_small(&self, h: &Homography) -> Result<Homography> {
        match self.config.downscale_factor {
            1 => Ok(*h),
            s => h.rescaled(1.0 / s as f64),
        }
    }

    fn to_full(&self, h: &Homography) -> Result<Homography> {
        match self.config.downscale_factor {
            1 => Ok(*h),
            s => h.rescaled(s as f64),
        }
    }

    fn inv_scale(&self) -> Homography {
        match self.config.downscale_factor {
            1 => Homography::identity(),
            s => Homography::scaling(1.0 / s as f64, 1.0 / s as f64).expect("positive scale"),
        }
    }

    /// Processes the next frame. Estimation failures never surface; only a
    /// frame of the wrong size is an error.
    pub fn step(&mut self, frame: &ImageBuffer, flow: &dyn FlowProvider, weights: &dyn WeightProvider) -> Result<FrameResult> {
        if frame.size() != self.full_size {
            return Err(Error::FrameSizeMismatch {
                expected: self.full_size,
                actual: frame.size(),
            });
        }
        let t = self.frame_index + 1;
        let s = self.config.downscale_factor;
        let work = to_working(frame, s)?;
        let size = work.size();
        let inv_s = self.inv_scale();
        let mode = self.config.pre_warp;

        let mut global = None;
        let mut ratio = 0.0;
        let mut count = 0;
        if mode != PreWarpMode::Never {
            let anchor = match mode {
                PreWarpMode::Always => self.last_output,
                _ => self.last_good_pose,
            };
            let pre = self.to_small(&anchor)?;
            let pre_inv = pre.inverse()?;
            let warped = timed(&mut self.timings, "prewarp", || warp_image(&pre_inv, &work, size))?;
            let req = FlowRequest {
                source: &self.template,
                target: &warped.image,
                source_frame: 0,
                target_frame: t,
                source_warp: inv_s,
                target_warp: pre_inv.compose(&inv_s)?,
            };
            let est = flow_estimate(
                &self.config,
                &mut self.timings,
                &req,
                &self.mask,
                Some(&warped.valid),
                flow,
                weights,
                "global",
            )?;
            ratio = est.ratio;
            count = est.count;
            if let Some(h) = est.homography {
                if ratio >= self.config.lost_ratio {
                    if let Ok(pose) = pre.compose(&h).and_then(|p| self.to_full(&p)) {
                        global = Some(pose);
                    }
                }
            }
        }

        let result = match global {
            Some(pose) => {
                self.last_good_index = t;
                self.last_good_pose = pose;
                self.lost_streak = 0;
                self.status = TrackStatus::Tracking;
                FrameResult {
                    frame_index: t,
                    pose,
                    status: TrackStatus::Tracking,
                    inlier_ratio: ratio,
                    used_local_fallback: false,
                    local_homography: None,
                    correspondences: count,
                }
            }
            None => self.local_step(t, &work, flow, weights, ratio, count)?,
        };
        self.last_output = result.pose;
        self.prev_frame = work;
        self.frame_index = t;
        Ok(result)
    }

    fn local_step(
        &mut self,
        t: usize,
        work: &ImageBuffer,
        flow: &dyn FlowProvider,
        weights: &dyn WeightProvider,
        global_ratio: f64,
        global_count: usize,
    ) -> Result<FrameResult> {
        let inv_s = self.inv_scale();
        let prev_small = self.to_small(&self.last_output)?;
        let mask = self.mask.warp(&prev_small, work.size())?;
        let req = FlowRequest {
            source: &self.prev_frame,
            target: work,
            source_frame: t - 1,
            target_frame: t,
            source_warp: inv_s,
            target_warp: inv_s,
        };
        let est = flow_estimate(&self.config, &mut self.timings, &req, &mask, None, flow, weights, "local")?;
        let local = est.homography.and_then(|h| {
            let pose = h.compose(&prev_small).and_then(|p| self.to_full(&p)).ok()?;
            Some((self.to_full(&h).ok()?, pose))
        });
        let (local_homography, pose) = match local {
            Some((h, pose)) => (Some(h), pose),
            None => (None, self.last_output),
        };

        let never = self.config.pre_warp == PreWarpMode::Never;
        let (ratio, count) = if never { (est.ratio, est.count) } else { (global_ratio, global_count) };
        let lost = !never || local_homography.is_none() || ratio < self.config.lost_ratio;
        if lost {
            self.status = TrackStatus::Lost;
            self.lost_streak += 1;
            if self.lost_streak > self.config.max_lost_frames {
                self.last_good_index = 0;
                self.last_good_pose = Homography::identity();
            }
        } else {
            self.status = TrackStatus::Tracking;
            self.lost_streak = 0;
        }
        Ok(FrameResult {
            frame_index: t,
            pose,
            status: self.status,
            inlier_ratio: ratio,
            used_local_fallback: true,
            local_homography,
            correspondences: count,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn flow_estimate(
    config: &TrackerConfig,
    timings: &mut BTreeMap<String, StageTiming>,
    req: &FlowRequest<'_>,
    mask: &Mask,
    target_valid: Option<&Mask>,
    flow: &dyn FlowProvider,
    weights: &dyn WeightProvider,
    stream: &str,
) -> Result<Estimate> {
    let failed = Estimate {
        homography: None,
        ratio: 0.0,
        count: 0,
    };
    // provider failures (missing files, bad input) are the caller's problem;
    // only estimation failures turn into a lost frame
    let field = timed(timings, &format!("{stream}_flow"), || flow.flow(req))?;
    let t = req.target_frame as u64;
    let opts = SampleOptions {
        weights: None,
        target_valid,
    };
    let mut c: CorrespondenceSet = flow_to_correspondences_with(
        &field,
        mask,
        req.target.size(),
        config.max_correspondences,
        sub_seed(config.rng_seed, &format!("{stream}_subsample"), t),
        opts,
    )?;
    // sampling ignores weights, so only the kept pixels need scoring
    if config.estimator.uses_weights() {
        let pixels: Vec<(usize, usize)> = c.pairs().iter().map(|p| (p.p.x as usize, p.p.y as usize)).collect();
        let w = timed(timings, "weights", || weights.weights_at(req, &field, flow, &pixels))?;
        c.set_weights(w)?;
    }
    let cfg = config.estimator_config();
    let seed = sub_seed(config.rng_seed, &format!("{stream}_ransac"), t);
    let est = timed(timings, "estimate", || estimate(&c, &cfg, seed));
    match est {
        Ok(r) => {
            let (_, ratio) = inlier_stats(&c, &r.homography, config.inlier_threshold);
            Ok(Estimate {
                homography: Some(r.homography),
                ratio,
                count: c.len(),
            })
        }
        Err(e) if e.is_estimation_failure() => Ok(Estimate { count: c.len(), ..failed }),
        Err(e) => Err(e),
    }
}

/// Mask pixels not all on one line.
fn has_spread(mask: &Mask) -> bool {
    let pts: Vec<(f64, f64)> = (0..mask.height())
        .flat_map(|y| (0..mask.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y))
        .map(|(x, y)| (x as f64, y as f64))
        .collect();
    let Some(&(x0, y0)) = pts.first() else { return false };
    let Some(&(x1, y1)) = pts.iter().find(|&&(x, y)| (x, y) != (x0, y0)) else { return false };
    pts.iter()
        .any(|&(x, y)| ((x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)).abs() > 1e-9)
}

/// Runs a tracker over frames `1..` (frame 0 is the template) and returns
/// one result per frame, with an identity entry for frame 0.
pub fn track_frames<I>(
    template: &ImageBuffer,
    mask: &Mask,
    config: TrackerConfig,
    frames: I,
    flow: &dyn FlowProvider,
    weights: &dyn WeightProvider,
) -> Result<(Vec<FrameResult>, BTreeMap<String, StageTiming>)>
where
    I: IntoIterator<Item = Result<ImageBuffer>>,
{
    let mut state = TrackerState::init(template, mask, config)?;
    let mut out = vec![FrameResult {
        frame_index: 0,
        pose: Homography::identity(),
        status: TrackStatus::Tracking,
        inlier_ratio: 1.0,
        used_local_fallback: false,
        local_homography: None,
        correspondences: 0,
    }];
    for frame in frames {
        out.push(state.step(&frame?, flow, weights)?);
    }
    Ok((out, state.timings().clone()))
}
