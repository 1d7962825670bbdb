//! Synthetic pairs and sequences with exact ground truth.

mod degrade;
mod texture;

pub use degrade::{degrade, degrade_with, motion_blur, DegradeMethod};
pub use texture::{binomial_blur, procedural_texture};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{warp_image, Homography, ImageBuffer, Mask, Point2};
use crate::seeds::sub_seed;

const MAX_ATTEMPTS: usize = 100;

/// Degradation recipe for generated pairs and sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    /// Corner displacement bound as a fraction of the image diagonal.
    pub corner_perturbation_frac: f64,
    pub blur_max_len: f64,
    pub degrade_quality: u8,
    pub degrade_method: DegradeMethod,
    pub rng_seed: u64,
}

impl Default for PairSpec {
    fn default() -> Self {
        Self {
            corner_perturbation_frac: 0.20,
            blur_max_len: 20.0,
            degrade_quality: 25,
            degrade_method: DegradeMethod::Transform,
            rng_seed: 0,
        }
    }
}

impl PairSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.corner_perturbation_frac) {
            return Err(Error::InvalidParameter(format!(
                "corner fraction {} outside [0, 0.5)",
                self.corner_perturbation_frac
            )));
        }
        if !(self.blur_max_len >= 0.0 && self.blur_max_len.is_finite()) {
            return Err(Error::InvalidParameter(format!("blur length {}", self.blur_max_len)));
        }
        if !(1..=100).contains(&self.degrade_quality) {
            return Err(Error::InvalidParameter(format!("quality {} outside 1..=100", self.degrade_quality)));
        }
        Ok(())
    }
}

fn image_corners(size: (usize, usize)) -> [Point2; 4] {
    let (w, h) = ((size.0 - 1) as f64, (size.1 - 1) as f64);
    [Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(w, h), Point2::new(0.0, h)]
}

/// True when the quad's turns all have the same strict sign.
pub fn is_convex(q: &[Point2; 4]) -> bool {
    let mut sign = 0.0;
    for i in 0..4 {
        let (a, b, c) = (q[i], q[(i + 1) % 4], q[(i + 2) % 4]);
        let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
        if cross.abs() < 1e-9 || (sign != 0.0 && cross.signum() != sign) {
            return false;
        }
        sign = cross.signum();
    }
    true
}

/// Exact four-point homography from the image corners to corners displaced
/// by independent uniform vectors in a disc of radius `frac · diagonal`.
pub fn random_homography<R: Rng + ?Sized>(size: (usize, usize), frac: f64, rng: &mut R) -> Result<Homography> {
    if !(0.0..0.5).contains(&frac) {
        return Err(Error::InvalidParameter(format!("corner fraction {frac} outside [0, 0.5)")));
    }
    if size.0 < 2 || size.1 < 2 {
        return Err(Error::InvalidParameter(format!("image size {size:?} too small")));
    }
    if frac == 0.0 {
        return Ok(Homography::identity());
    }
    let radius = frac * ((size.0 * size.0 + size.1 * size.1) as f64).sqrt();
    let src = image_corners(size);
    for _ in 0..MAX_ATTEMPTS {
        let dst = src.map(|c| {
            let r = radius * rng.random::<f64>().sqrt();
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            Point2::new(c.x + r * a.cos(), c.y + r * a.sin())
        });
        if !is_convex(&dst) {
            continue;
        }
        if let Ok(h) = Homography::from_four_points(&src, &dst) {
            if well_conditioned(&h) {
                return Ok(h);
            }
        }
    }
    Err(Error::GenerationFailed(format!("no convex well-conditioned sample in {MAX_ATTEMPTS} attempts")))
}

fn well_conditioned(h: &Homography) -> bool {
    let sv = h.matrix().singular_values();
    let (max, min) = (sv.max(), sv.min());
    min > 0.0 && max / min < 1e8
}

/// A generated pair with generation details.
#[derive(Clone, Debug)]
pub struct PairRecord {
    pub first: ImageBuffer,
    pub second: ImageBuffer,
    /// Second image before blur and compression.
    pub second_clean: ImageBuffer,
    /// Maps first-image pixels onto second-image pixels.
    pub gt: Homography,
    pub blur_len: f64,
    pub blur_angle: f64,
}

/// `(first, second, gt)` with `gt = H_b · H_a⁻¹`.
pub fn make_pair(src: &ImageBuffer, spec: &PairSpec) -> Result<(ImageBuffer, ImageBuffer, Homography)> {
    let r = make_pair_detailed(src, spec)?;
    Ok((r.first, r.second, r.gt))
}

pub fn make_pair_detailed(src: &ImageBuffer, spec: &PairSpec) -> Result<PairRecord> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let size = src.size();
    let ha = random_homography(size, spec.corner_perturbation_frac, &mut rng)?;
    let hb = random_homography(size, spec.corner_perturbation_frac, &mut rng)?;
    let gt = hb.compose(&ha.inverse()?)?;
    let first = warp_image(&ha, src, size)?.image;
    let second_clean = warp_image(&hb, src, size)?.image;
    let blur_len = if spec.blur_max_len > 0.0 {
        rng.random_range(0.0..=spec.blur_max_len)
    } else {
        0.0
    };
    let blur_angle = rng.random_range(0.0..std::f64::consts::PI);
    let blurred = motion_blur(&second_clean, blur_len, blur_angle);
    Ok(PairRecord {
        first: degrade_with(&first, spec.degrade_quality, spec.degrade_method)?,
        second: degrade_with(&blurred, spec.degrade_quality, spec.degrade_method)?,
        second_clean,
        gt,
        blur_len,
        blur_angle,
    })
}

/// Per-frame generation metadata.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameLabel {
    pub blur_len: f64,
    pub blur_angle: f64,
    /// Mean distance of the template corners from their frame-0 positions.
    pub perturbation: f64,
}

/// Frames plus per-frame ground truth `H₀→t`.
#[derive(Clone, Debug)]
pub struct SequenceRecord {
    pub frames: Vec<ImageBuffer>,
    pub gt_poses: Vec<Homography>,
    pub template_mask: Mask,
    pub labels: Vec<FrameLabel>,
}

impl SequenceRecord {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// The central half-size rectangle used as the template region.
pub fn central_mask(size: (usize, usize)) -> Mask {
    let (w, h) = size;
    Mask::rectangle(w, h, w / 4, h / 4, w - w / 4, h - h / 4)
}

/// Poses and labels of a sequence, with frames rendered on demand.
///
/// A full 501-frame sequence is large; streaming frames through
/// [`SequencePlan::render`] keeps memory flat.
#[derive(Clone, Debug)]
pub struct SequencePlan {
    source: ImageBuffer,
    gt_poses: Vec<Homography>,
    template_mask: Mask,
    labels: Vec<FrameLabel>,
    quality: u8,
    method: DegradeMethod,
}

impl SequencePlan {
    /// Template corners (the mask's rectangle) follow damped per-corner
    /// random walks with a shared component and a pull back to rest.
    /// Each frame's blur follows its own inter-frame motion, capped at
    /// `spec.blur_max_len`.
    pub fn new(src: ImageBuffer, length: usize, motion_smoothness: f64, spec: &PairSpec) -> Result<Self> {
        spec.validate()?;
        if length == 0 {
            return Err(Error::InvalidParameter("sequence length must be positive".into()));
        }
        if !(motion_smoothness >= 0.0 && motion_smoothness.is_finite()) {
            return Err(Error::InvalidParameter(format!("motion scale {motion_smoothness}")));
        }
        let size = src.size();
        let template_mask = central_mask(size);
        let rest = template_mask
            .bounding_quad()
            .ok_or(Error::EmptyMask(0))?;
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(spec.rng_seed, "motion", 0));
        let (fw, fh) = ((size.0 - 1) as f64, (size.1 - 1) as f64);

        let mut disp = [Point2::new(0.0, 0.0); 4];
        let mut vel = [Point2::new(0.0, 0.0); 4];
        let mut shared = Point2::new(0.0, 0.0);
        let mut gt_poses = vec![Homography::identity()];
        let mut labels = vec![FrameLabel {
            blur_len: 0.0,
            blur_angle: 0.0,
            perturbation: 0.0,
        }];
        let normal = |rng: &mut ChaCha8Rng| -> Point2 {
            Point2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        };
        for _ in 1..length {
            if motion_smoothness == 0.0 {
                gt_poses.push(Homography::identity());
                labels.push(labels[0]);
                continue;
            }
            let s = motion_smoothness;
            let g = normal(&mut rng);
            shared = Point2::new(0.85 * shared.x + s * g.x, 0.85 * shared.y + s * g.y);
            let mut next = disp;
            let mut accepted = false;
            for _ in 0..MAX_ATTEMPTS {
                let mut trial_v = vel;
                for i in 0..4 {
                    let n = normal(&mut rng);
                    trial_v[i] = Point2::new(
                        0.85 * vel[i].x + 0.5 * s * n.x - 0.015 * disp[i].x,
                        0.85 * vel[i].y + 0.5 * s * n.y - 0.015 * disp[i].y,
                    );
                    next[i] = Point2::new(disp[i].x + trial_v[i].x + shared.x, disp[i].y + trial_v[i].y + shared.y);
                }
                let quad: [Point2; 4] = std::array::from_fn(|i| rest[i] + next[i]);
                let inside = quad.iter().all(|c| c.x >= 0.0 && c.y >= 0.0 && c.x <= fw && c.y <= fh);
                if inside && is_convex(&quad) {
                    vel = trial_v;
                    accepted = true;
                    break;
                }
                shared = Point2::new(-shared.x, -shared.y);
                for v in vel.iter_mut() {
                    *v = Point2::new(-v.x, -v.y);
                }
            }
            if !accepted {
                return Err(Error::GenerationFailed("corner walk left the frame".into()));
            }
            let quad: [Point2; 4] = std::array::from_fn(|i| rest[i] + next[i]);
            let pose = Homography::from_four_points(&rest, &quad)?;
            let step: Point2 = (0..4).fold(Point2::new(0.0, 0.0), |a, i| a + (next[i] - disp[i]));
            let step = Point2::new(step.x / 4.0, step.y / 4.0);
            let perturbation = next.iter().map(|d| d.x.hypot(d.y)).sum::<f64>() / 4.0;
            disp = next;
            gt_poses.push(pose);
            labels.push(FrameLabel {
                blur_len: step.x.hypot(step.y).min(spec.blur_max_len),
                blur_angle: step.y.atan2(step.x).rem_euclid(std::f64::consts::PI),
                perturbation,
            });
        }
        Ok(Self {
            source: src,
            gt_poses,
            template_mask,
            labels,
            quality: spec.degrade_quality,
            method: spec.degrade_method,
        })
    }

    pub fn len(&self) -> usize {
        self.gt_poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt_poses.is_empty()
    }

    pub fn frame_size(&self) -> (usize, usize) {
        self.source.size()
    }

    pub fn gt_poses(&self) -> &[Homography] {
        &self.gt_poses
    }

    pub fn template_mask(&self) -> &Mask {
        &self.template_mask
    }

    pub fn labels(&self) -> &[FrameLabel] {
        &self.labels
    }

    /// Frame `t`: the source seen through `gt_poses[t]` (edge-clamped),
    /// blurred per its label, then compressed.
    pub fn render(&self, t: usize) -> Result<ImageBuffer> {
        let pose = self
            .gt_poses
            .get(t)
            .ok_or_else(|| Error::InvalidParameter(format!("frame {t} beyond sequence length {}", self.len())))?;
        let inv = pose.inverse()?;
        let m = inv.matrix();
        let src = &self.source;
        let (w, h, ch) = (src.width(), src.height(), src.channels());
        let mut frame = ImageBuffer::new(w, h, ch)?;
        let [a, b, c, d, e, f, g, hh, i] = [
            m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)],
        ];
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                let z = g * xf + hh * yf + i;
                let sx = (a * xf + b * yf + c) / z;
                let sy = (d * xf + e * yf + f) / z;
                for k in 0..ch {
                    frame.set(x, y, k, src.sample_clamped(sx, sy, k));
                }
            }
        }
        let label = self.labels[t];
        let blurred = motion_blur(&frame, label.blur_len, label.blur_angle);
        degrade_with(&blurred, self.quality, self.method)
    }

    pub fn into_record(self) -> Result<SequenceRecord> {
        let frames = (0..self.len()).map(|t| self.render(t)).collect::<Result<Vec<_>>>()?;
        Ok(SequenceRecord {
            frames,
            gt_poses: self.gt_poses,
            template_mask: self.template_mask,
            labels: self.labels,
        })
    }
}

/// Fully rendered sequence; see [`SequencePlan`] for the streaming form.
pub fn make_sequence(src: &ImageBuffer, length: usize, motion_smoothness: f64, spec: &PairSpec) -> Result<SequenceRecord> {
    SequencePlan::new(src.clone(), length, motion_smoothness, spec)?.into_record()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fraction_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(random_homography((640, 480), 0.0, &mut rng).unwrap(), Homography::identity());
    }

    #[test]
    fn corner_bound_and_exactness() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let size = (640, 480);
        let bound = 0.2 * (640f64 * 640.0 + 480.0 * 480.0).sqrt();
        assert!((bound - 160.0).abs() < 1e-12);
        let corners = image_corners(size);
        for _ in 0..1000 {
            let h = random_homography(size, 0.2, &mut rng).unwrap();
            let moved: Vec<Point2> = corners.iter().map(|&c| h.warp_point(c).unwrap()).collect();
            for (c, m) in corners.iter().zip(&moved) {
                assert!(c.distance(m) <= bound + 1e-9);
            }
            let back = h.inverse().unwrap();
            for (c, m) in corners.iter().zip(&moved) {
                assert!(back.warp_point(*m).unwrap().distance(c) < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_large_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(random_homography((64, 48), 0.5, &mut rng).is_err());
    }

    #[test]
    fn trivial_pair() {
        let src = procedural_texture(64, 48, 1);
        let spec = PairSpec {
            corner_perturbation_frac: 0.0,
            blur_max_len: 0.0,
            degrade_quality: 100,
            ..PairSpec::default()
        };
        let (a, b, gt) = make_pair(&src, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(gt, Homography::identity());
    }

    #[test]
    fn pair_sampling_oracle() {
        // band-limited source: bilinear resampling twice agrees with once
        // only where the image is locally close to linear
        let src = binomial_blur(&procedural_texture(160, 120, 2), 8);
        let spec = PairSpec {
            corner_perturbation_frac: 0.1,
            blur_max_len: 0.0,
            degrade_quality: 100,
            rng_seed: 5,
            ..PairSpec::default()
        };
        let r = make_pair_detailed(&src, &spec).unwrap();
        let (mut total, mut good) = (0usize, 0usize);
        for y in 10..110 {
            for x in 10..150 {
                let p = Point2::new(x as f64, y as f64);
                let q = r.gt.warp_point(p).unwrap();
                let (Some(v2), v1) = (r.second_clean.sample(q.x, q.y, 0), r.first.get(x, y, 0)) else { continue };
                // skip pixels that touch the zero fill of either warp
                let (fx, fy) = (q.x.floor() as usize, q.y.floor() as usize);
                let fill = [(0, 0), (1, 0), (0, 1), (1, 1)]
                    .iter()
                    .any(|&(dx, dy)| r.second_clean.get((fx + dx).min(159), (fy + dy).min(119), 0) == 0.0);
                if v1 == 0.0 || fill {
                    continue;
                }
                total += 1;
                if (v2 - v1).abs() < 2.0 / 255.0 {
                    good += 1;
                }
            }
        }
        assert!(total > 1000);
        assert!(good as f64 >= 0.99 * total as f64, "{good}/{total}");
    }

    #[test]
    fn default_pair_loses_quality() {
        let src = procedural_texture(128, 96, 3);
        let r = make_pair_detailed(&src, &PairSpec { rng_seed: 9, ..PairSpec::default() }).unwrap();
        assert!(r.second_clean.psnr(&r.second).unwrap() < 45.0);
    }

    #[test]
    fn still_sequence() {
        let src = procedural_texture(48, 36, 4);
        let seq = make_sequence(&src, 5, 0.0, &PairSpec::default()).unwrap();
        assert_eq!(seq.len(), 5);
        for t in 0..5 {
            assert_eq!(seq.frames[t], seq.frames[0]);
            assert_eq!(seq.gt_poses[t], Homography::identity());
        }
    }

    #[test]
    fn long_plan_keeps_quads_convex() {
        let src = procedural_texture(160, 120, 6);
        let spec = PairSpec { rng_seed: 1, ..PairSpec::default() };
        let plan = SequencePlan::new(src, 501, 0.6, &spec).unwrap();
        assert_eq!(plan.len(), 501);
        assert_eq!(plan.gt_poses()[0], Homography::identity());
        let rest = plan.template_mask().bounding_quad().unwrap();
        let mut moved = false;
        for h in plan.gt_poses() {
            let q = rest.map(|c| h.warp_point(c).unwrap());
            assert!(is_convex(&q));
            moved |= q[0].distance(&rest[0]) > 3.0;
        }
        assert!(moved);
        let again = SequencePlan::new(procedural_texture(160, 120, 6), 501, 0.6, &spec).unwrap();
        assert_eq!(again.gt_poses(), plan.gt_poses());
    }
}
