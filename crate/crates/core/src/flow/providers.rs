use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::synthetic::random_displacement;
use super::{lucas_kanade_flow_with, synthetic_flow, weights_fb_at, weights_fb_consistency, weights_uniform};
use super::{ContaminationSpec, FlowField, LkParams, WeightField};
use crate::error::{Error, Result};
use crate::geometry::{Homography, ImageBuffer, Point2};
use crate::seeds::sub_seed;

/// One flow query issued by the tracker.
///
/// `source_warp` maps full-resolution coordinates of frame `source_frame`
/// into pixel coordinates of `source` (likewise for the target). For a plain
/// frame at scale `s` this is `diag(1/s, 1/s, 1)`; for a pre-warped frame it
/// also includes the pre-warp.
#[derive(Clone, Copy, Debug)]
pub struct FlowRequest<'a> {
    pub source: &'a ImageBuffer,
    pub target: &'a ImageBuffer,
    pub source_frame: usize,
    pub target_frame: usize,
    pub source_warp: Homography,
    pub target_warp: Homography,
}

impl<'a> FlowRequest<'a> {
    /// Same pair of images, opposite direction.
    pub fn reversed(&self) -> FlowRequest<'a> {
        FlowRequest {
            source: self.target,
            target: self.source,
            source_frame: self.target_frame,
            target_frame: self.source_frame,
            source_warp: self.target_warp,
            target_warp: self.source_warp,
        }
    }
}

/// Anything that produces a dense field over the source image grid.
pub trait FlowProvider: Send + Sync {
    fn flow(&self, req: &FlowRequest<'_>) -> Result<FlowField>;
}

/// Per-pixel confidence for a forward field.
pub trait WeightProvider: Send + Sync {
    fn weights(&self, req: &FlowRequest<'_>, forward: &FlowField, flow: &dyn FlowProvider) -> Result<WeightField>;

    /// Weights at selected pixels; the same values the full field holds there.
    fn weights_at(
        &self,
        req: &FlowRequest<'_>,
        forward: &FlowField,
        flow: &dyn FlowProvider,
        pixels: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        let wf = self.weights(req, forward, flow)?;
        let (w, h) = wf.size();
        pixels
            .iter()
            .map(|&(x, y)| {
                if x < w && y < h {
                    Ok(wf.get(x, y))
                } else {
                    Err(Error::InvalidParameter(format!("pixel ({x}, {y}) outside {w}x{h} field")))
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct UniformWeights;

impl WeightProvider for UniformWeights {
    fn weights(&self, _: &FlowRequest<'_>, forward: &FlowField, _: &dyn FlowProvider) -> Result<WeightField> {
        Ok(weights_uniform(forward.size()))
    }
}

/// Asks the flow provider for the reverse field and scores consistency.
#[derive(Clone, Copy, Debug)]
pub struct ForwardBackwardWeights {
    pub sigma: f64,
}

impl Default for ForwardBackwardWeights {
    fn default() -> Self {
        Self { sigma: 2.0 }
    }
}

impl WeightProvider for ForwardBackwardWeights {
    fn weights(&self, req: &FlowRequest<'_>, forward: &FlowField, flow: &dyn FlowProvider) -> Result<WeightField> {
        let backward = flow.flow(&req.reversed())?;
        weights_fb_consistency(forward, &backward, self.sigma)
    }

    fn weights_at(
        &self,
        req: &FlowRequest<'_>,
        forward: &FlowField,
        flow: &dyn FlowProvider,
        pixels: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        let backward = flow.flow(&req.reversed())?;
        weights_fb_at(forward, &backward, self.sigma, pixels)
    }
}

/// Oracle flow from ground-truth poses, degraded on purpose.
///
/// On top of [`ContaminationSpec`] it can make outliers share one wrong
/// offset per request, add a smooth per-request bias field, treat
/// displacements beyond a capture radius as failures, and mark whole frames
/// as corrupted. Fields touching a corrupted frame are random except for an
/// optional occluder disc that moves as one rigid translation, consistently
/// in both directions.
#[derive(Clone, Debug)]
pub struct SyntheticFlowProvider {
    poses: Vec<Homography>,
    contamination: ContaminationSpec,
    coherent_outliers: bool,
    bias: f64,
    capture_radius: Option<f64>,
    corrupted: BTreeSet<usize>,
    corruption_magnitude: f64,
    occluder_fraction: f64,
}

impl SyntheticFlowProvider {
    /// `poses[t]` maps frame 0 to frame t at full resolution.
    pub fn new(poses: Vec<Homography>) -> Self {
        Self {
            poses,
            contamination: ContaminationSpec::clean(),
            coherent_outliers: false,
            bias: 0.0,
            capture_radius: None,
            corrupted: BTreeSet::new(),
            corruption_magnitude: 60.0,
            occluder_fraction: 0.0,
        }
    }

    /// Outliers become the true vector plus one shared offset of magnitude
    /// in `[M/2, M]`, drawn independently per request direction.
    pub fn with_coherent_outliers(mut self) -> Self {
        self.coherent_outliers = true;
        self
    }

    /// Area of the occluder disc in corrupted fields, as a fraction of the
    /// central half-size rectangle.
    pub fn with_occluder(mut self, fraction: f64) -> Self {
        self.occluder_fraction = fraction;
        self
    }

    pub fn with_contamination(mut self, spec: ContaminationSpec) -> Self {
        self.contamination = spec;
        self
    }

    /// Amplitude in pixels of a random affine error field added to every
    /// inlier vector of a request.
    pub fn with_bias(mut self, amplitude: f64) -> Self {
        self.bias = amplitude;
        self
    }

    pub fn with_capture_radius(mut self, radius: f64) -> Self {
        self.capture_radius = Some(radius);
        self
    }

    pub fn with_corrupted_frames(mut self, frames: impl IntoIterator<Item = usize>) -> Self {
        self.corrupted.extend(frames);
        self
    }

    pub fn corrupted_frames(&self) -> &BTreeSet<usize> {
        &self.corrupted
    }

    fn pose(&self, t: usize) -> Result<&Homography> {
        self.poses
            .get(t)
            .ok_or_else(|| Error::InvalidParameter(format!("no ground-truth pose for frame {t}")))
    }

    /// Source-pixel to target-pixel map for a request.
    pub fn true_map(&self, req: &FlowRequest<'_>) -> Result<Homography> {
        let rel = self.pose(req.target_frame)?.compose(&self.pose(req.source_frame)?.inverse()?)?;
        req.target_warp.compose(&rel)?.compose(&req.source_warp.inverse()?)
    }
}

impl FlowProvider for SyntheticFlowProvider {
    fn flow(&self, req: &FlowRequest<'_>) -> Result<FlowField> {
        let m = self.true_map(req)?;
        let size = req.source.size();
        let key = (req.source_frame as u64) << 32 | req.target_frame as u64;
        let seed = sub_seed(self.contamination.rng_seed, "flow", key);
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "extra", 0));

        if self.corrupted.contains(&req.source_frame) || self.corrupted.contains(&req.target_frame) {
            return Ok(self.corrupted_field(req, size, &mut rng));
        }

        let spec = ContaminationSpec {
            rng_seed: seed,
            ..self.contamination.clone()
        };
        let noisy = synthetic_flow(&m, size, &spec)?;
        let mut f = noisy.field;
        let mh = m.matrix();
        let truth = |x: usize, y: usize| {
            let (xf, yf) = (x as f64, y as f64);
            let z = mh[(2, 0)] * xf + mh[(2, 1)] * yf + mh[(2, 2)];
            let tu = (mh[(0, 0)] * xf + mh[(0, 1)] * yf + mh[(0, 2)]) / z - xf;
            let tv = (mh[(1, 0)] * xf + mh[(1, 1)] * yf + mh[(1, 2)]) / z - yf;
            (tu, tv)
        };
        if self.coherent_outliers && spec.outlier_fraction > 0.0 {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r = spec.outlier_magnitude * rng.random_range(0.5..=1.0);
            let (ou, ov) = (r * a.cos(), r * a.sin());
            for y in 0..size.1 {
                for x in 0..size.0 {
                    if noisy.outliers.get(x, y) {
                        let (tu, tv) = truth(x, y);
                        f.set(x, y, Some((tu + ou, tv + ov)));
                    }
                }
            }
        }
        if self.bias == 0.0 && self.capture_radius.is_none() {
            return Ok(f);
        }
        let g: [f64; 6] = std::array::from_fn(|_| self.bias * rng.sample::<f64, _>(StandardNormal));
        let (cx, cy) = (size.0 as f64 / 2.0, size.1 as f64 / 2.0);
        let scale = cx.max(cy).max(1.0);
        for y in 0..size.1 {
            for x in 0..size.0 {
                if noisy.outliers.get(x, y) {
                    continue;
                }
                let Some((u, v)) = f.get(x, y) else { continue };
                if let Some(r) = self.capture_radius {
                    let (tu, tv) = truth(x, y);
                    if tu.hypot(tv) > r {
                        let d = random_displacement(&mut rng, self.corruption_magnitude);
                        f.set(x, y, Some((d.x, d.y)));
                        continue;
                    }
                }
                let (nx, ny) = ((x as f64 - cx) / scale, (y as f64 - cy) / scale);
                f.set(x, y, Some((u + g[0] + g[1] * nx + g[2] * ny, v + g[3] + g[4] * nx + g[5] * ny)));
            }
        }
        Ok(f)
    }
}

impl SyntheticFlowProvider {
    fn corrupted_field(&self, req: &FlowRequest<'_>, size: (usize, usize), rng: &mut ChaCha8Rng) -> FlowField {
        let mut f = FlowField::invalid(size.0, size.1);
        for y in 0..size.1 {
            for x in 0..size.0 {
                let d = random_displacement(rng, self.corruption_magnitude);
                f.set(x, y, Some((d.x, d.y)));
            }
        }
        if self.occluder_fraction <= 0.0 {
            return f;
        }
        // the disc and its motion are keyed on the unordered frame pair and
        // live in the coordinates of the lower frame's request image
        let (lo, hi) = (req.source_frame.min(req.target_frame), req.source_frame.max(req.target_frame));
        let key = (lo as u64) << 32 | hi as u64;
        let mut occ = ChaCha8Rng::seed_from_u64(sub_seed(self.contamination.rng_seed, "occluder", key));
        let (w, h) = (size.0 as f64, size.1 as f64);
        let cx = w / 2.0 + occ.random_range(-w / 8.0..=w / 8.0);
        let cy = h / 2.0 + occ.random_range(-h / 8.0..=h / 8.0);
        let radius = (self.occluder_fraction * (w / 2.0) * (h / 2.0) / std::f64::consts::PI).sqrt();
        let a: f64 = occ.random_range(0.0..std::f64::consts::TAU);
        let r = self.corruption_magnitude * occ.random_range(0.5..=1.0);
        let (mut tu, mut tv) = (r * a.cos(), r * a.sin());
        let (mut ox, mut oy) = (cx, cy);
        if req.source_frame > req.target_frame {
            ox += tu;
            oy += tv;
            tu = -tu;
            tv = -tv;
        }
        for y in 0..size.1 {
            for x in 0..size.0 {
                if (x as f64 - ox).hypot(y as f64 - oy) <= radius {
                    f.set(x, y, Some((tu, tv)));
                }
            }
        }
        f
    }
}

/// Classical provider: pyramidal Lucas–Kanade on the request images.
#[derive(Clone, Copy, Debug, Default)]
pub struct LkFlowProvider {
    pub params: LkParams,
}

impl FlowProvider for LkFlowProvider {
    fn flow(&self, req: &FlowRequest<'_>) -> Result<FlowField> {
        lucas_kanade_flow_with(req.source, req.target, &self.params)
    }
}

/// Precomputed full-resolution fields read from `dir/{src:06}_{dst:06}.flo`
/// and resampled through the request warps.
#[derive(Clone, Debug)]
pub struct FileFlowProvider {
    dir: PathBuf,
}

impl FileFlowProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, source_frame: usize, target_frame: usize) -> PathBuf {
        self.dir.join(format!("{source_frame:06}_{target_frame:06}.flo"))
    }
}

impl FlowProvider for FileFlowProvider {
    fn flow(&self, req: &FlowRequest<'_>) -> Result<FlowField> {
        let path = self.path_for(req.source_frame, req.target_frame);
        if !path.is_file() {
            return Err(Error::MissingFlow {
                frame: req.target_frame,
                path,
            });
        }
        let raw = crate::io::read_flo(&path)?;
        let (w, h) = req.source.size();
        let src_inv = req.source_warp.inverse()?;
        let mut out = FlowField::invalid(w, h);
        for y in 0..h {
            for x in 0..w {
                let p = Point2::new(x as f64, y as f64);
                let Ok(q) = src_inv.warp_point(p) else { continue };
                let Some((u, v)) = raw.sample(q.x, q.y) else { continue };
                let Ok(e) = req.target_warp.warp_point(Point2::new(q.x + u, q.y + v)) else { continue };
                out.set(x, y, Some((e.x - p.x, e.y - p.y)));
            }
        }
        Ok(out)
    }
}
