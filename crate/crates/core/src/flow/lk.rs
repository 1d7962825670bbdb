use serde::{Deserialize, Serialize};

use super::FlowField;
use crate::error::{Error, Result};
use crate::geometry::{ImageBuffer, Mask};

/// Pyramidal Lucas–Kanade settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LkParams {
    pub levels: usize,
    /// Side of the square integration window, pixels.
    pub window: usize,
    pub iters: usize,
    /// Minimum smaller eigenvalue of the window-averaged structure tensor.
    pub min_eigen: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self {
            levels: 4,
            window: 21,
            iters: 5,
            min_eigen: 1e-4,
        }
    }
}

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    d: Vec<f64>,
}

impl Plane {
    fn from_image(img: &ImageBuffer) -> Self {
        let g = img.to_gray();
        Self {
            w: g.width(),
            h: g.height(),
            d: g.data().iter().map(|&v| v as f64).collect(),
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.d[y * self.w + x]
    }

    fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bot = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// 5-tap binomial blur, then decimation by two.
    fn pyr_down(&self) -> Self {
        const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let (w, h) = (self.w, self.h);
        let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = K
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * self.at(clampi(x as isize + k as isize - 2, w), y))
                    .sum();
            }
        }
        let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
        let mut d = vec![0.0; nw * nh];
        for y in 0..nh {
            for x in 0..nw {
                d[y * nw + x] = K
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * tmp[clampi(2 * y as isize + k as isize - 2, h) * w + 2 * x])
                    .sum();
            }
        }
        Self { w: nw, h: nh, d }
    }

    fn gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let (w, h) = (self.w, self.h);
        let mut gx = vec![0.0; w * h];
        let mut gy = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
                gx[y * w + x] = (self.at(xr, y) - self.at(xl, y)) / (xr - xl).max(1) as f64;
                gy[y * w + x] = (self.at(x, yd) - self.at(x, yu)) / (yd - yu).max(1) as f64;
            }
        }
        (gx, gy)
    }
}

/// Window means via an integral image; windows are clipped at the border.
fn box_mean(src: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut ii = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += src[y * w + x];
            ii[(y + 1) * (w + 1) + x + 1] = ii[y * (w + 1) + x + 1] + row;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let s = ii[y1 * (w + 1) + x1] - ii[y0 * (w + 1) + x1] - ii[y1 * (w + 1) + x0] + ii[y0 * (w + 1) + x0];
            out[y * w + x] = s / ((x1 - x0) * (y1 - y0)) as f64;
        }
    }
    out
}

fn min_eigen(a: f64, b: f64, c: f64) -> f64 {
    let m = 0.5 * (a + c);
    let d = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    m - d
}

/// Coarse-to-fine dense Lucas–Kanade flow from `i0` to `i1`.
///
/// Every pixel carries its own displacement; each iteration warps `i1` by
/// the current field and solves the window-averaged normal equations.
pub fn lucas_kanade_flow(i0: &ImageBuffer, i1: &ImageBuffer, levels: usize, window: usize, iters: usize) -> Result<FlowField> {
    lucas_kanade_flow_with(
        i0,
        i1,
        &LkParams {
            levels,
            window,
            iters,
            ..LkParams::default()
        },
    )
}

pub fn lucas_kanade_flow_with(i0: &ImageBuffer, i1: &ImageBuffer, p: &LkParams) -> Result<FlowField> {
    if i0.size() != i1.size() {
        return Err(Error::ImageSizeMismatch {
            expected: i0.size(),
            actual: i1.size(),
        });
    }
    if p.window == 0 || p.levels == 0 {
        return Err(Error::InvalidParameter("window and levels must be positive".into()));
    }
    let r = p.window / 2;
    let mut pyr0 = vec![Plane::from_image(i0)];
    let mut pyr1 = vec![Plane::from_image(i1)];
    while pyr0.len() < p.levels {
        let last = pyr0.last().unwrap();
        if last.w.min(last.h) < 2 * p.window.max(8) {
            break;
        }
        let (n0, n1) = (last.pyr_down(), pyr1.last().unwrap().pyr_down());
        pyr0.push(n0);
        pyr1.push(n1);
    }

    let mut u: Vec<f64> = Vec::new();
    let mut v: Vec<f64> = Vec::new();
    let mut prev_w = 0;
    let mut prev_h = 0;
    let mut tensor = (Vec::new(), Vec::new(), Vec::new());
    for lvl in (0..pyr0.len()).rev() {
        let (a, b) = (&pyr0[lvl], &pyr1[lvl]);
        let (w, h) = (a.w, a.h);
        if u.is_empty() {
            u = vec![0.0; w * h];
            v = vec![0.0; w * h];
        } else {
            let coarse_u = Plane { w: prev_w, h: prev_h, d: std::mem::take(&mut u) };
            let coarse_v = Plane { w: prev_w, h: prev_h, d: std::mem::take(&mut v) };
            u = vec![0.0; w * h];
            v = vec![0.0; w * h];
            for y in 0..h {
                for x in 0..w {
                    let (cx, cy) = ((x as f64 - 0.5) * 0.5 + 0.25, (y as f64 - 0.5) * 0.5 + 0.25);
                    u[y * w + x] = 2.0 * coarse_u.sample_clamped(cx, cy);
                    v[y * w + x] = 2.0 * coarse_v.sample_clamped(cx, cy);
                }
            }
        }
        prev_w = w;
        prev_h = h;

        let (gx, gy) = a.gradients();
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(s, t)| s * t).collect::<Vec<_>>();
        let sxx = box_mean(&prod(&gx, &gx), w, h, r);
        let sxy = box_mean(&prod(&gx, &gy), w, h, r);
        let syy = box_mean(&prod(&gy, &gy), w, h, r);

        let mut ex = vec![0.0; w * h];
        let mut ey = vec![0.0; w * h];
        for _ in 0..p.iters {
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let it = b.sample_clamped(x as f64 + u[i], y as f64 + v[i]) - a.at(x, y);
                    ex[i] = gx[i] * it;
                    ey[i] = gy[i] * it;
                }
            }
            let bx = box_mean(&ex, w, h, r);
            let by = box_mean(&ey, w, h, r);
            for i in 0..w * h {
                let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
                if det.abs() <= 1e-18 {
                    continue;
                }
                u[i] -= (syy[i] * bx[i] - sxy[i] * by[i]) / det;
                v[i] -= (sxx[i] * by[i] - sxy[i] * bx[i]) / det;
            }
        }
        if lvl == 0 {
            tensor = (sxx, sxy, syy);
        }
    }

    let (w, h) = i0.size();
    let mut valid = Mask::new(w, h, false);
    let (sxx, sxy, syy) = tensor;
    for y in r..h.saturating_sub(r) {
        for x in r..w.saturating_sub(r) {
            let i = y * w + x;
            let (ex, ey) = (x as f64 + u[i], y as f64 + v[i]);
            let inside = ex >= 0.0 && ey >= 0.0 && ex <= (w - 1) as f64 && ey <= (h - 1) as f64;
            let ok = inside && u[i].is_finite() && v[i].is_finite() && min_eigen(sxx[i], sxy[i], syy[i]) >= p.min_eigen;
            valid.set(x, y, ok);
        }
    }
    FlowField::from_parts(w, h, u, v, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{synthetic_flow, ContaminationSpec};
    use crate::geometry::{warp_image, Homography, Point2};

    fn texture(w: usize, h: usize, dx: f64) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64 - dx, y as f64);
            let checker = if ((x / 9.0).floor() + (y / 9.0).floor()) as i64 % 2 == 0 { 0.3 } else { 0.7 };
            let waves = 0.1 * (x * 0.31).sin() * (y * 0.23).cos() + 0.08 * ((x + 2.0 * y) * 0.13).sin();
            (checker * 0.6 + waves + 0.2) as f32
        })
        .unwrap()
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    }

    #[test]
    fn identical_images_give_zero_flow() {
        let img = texture(96, 80, 0.0);
        let f = lucas_kanade_flow(&img, &img, 4, 21, 5).unwrap();
        assert!(f.valid().count() > 0);
        for y in 0..80 {
            for x in 0..96 {
                if let Some((u, v)) = f.get(x, y) {
                    assert!(u.abs() < 1e-9 && v.abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn one_pixel_shift() {
        let a = texture(128, 96, 0.0);
        let b = texture(128, 96, 1.0);
        let f = lucas_kanade_flow(&a, &b, 4, 21, 5).unwrap();
        let mut us = Vec::new();
        let mut vs = Vec::new();
        for y in 0..96 {
            for x in 0..128 {
                if let Some((u, v)) = f.get(x, y) {
                    us.push(u);
                    vs.push(v);
                }
            }
        }
        assert!(us.len() > 1000);
        assert!((median(us) - 1.0).abs() < 0.2);
        assert!(median(vs).abs() < 0.2);
    }

    #[test]
    fn mild_homography_endpoint_error() {
        let (w, h) = (160usize, 120usize);
        let a = texture(w, h, 0.0);
        let diag = ((w * w + h * h) as f64).sqrt();
        let c = [
            Point2::new(0.0, 0.0),
            Point2::new((w - 1) as f64, 0.0),
            Point2::new((w - 1) as f64, (h - 1) as f64),
            Point2::new(0.0, (h - 1) as f64),
        ];
        let d = 0.02 * diag;
        let moved = [
            Point2::new(d * 0.7, -d * 0.5),
            Point2::new((w - 1) as f64 - d * 0.4, d * 0.6),
            Point2::new((w - 1) as f64 + d * 0.5, (h - 1) as f64 + d * 0.3),
            Point2::new(-d * 0.6, (h - 1) as f64 - d * 0.7),
        ];
        let hm = Homography::from_four_points(&c, &moved).unwrap();
        let b = warp_image(&hm, &a, (w, h)).unwrap().image;
        let f = lucas_kanade_flow(&a, &b, 4, 21, 5).unwrap();
        let truth = synthetic_flow(&hm, (w, h), &ContaminationSpec::clean()).unwrap().field;
        let mut epe = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if let (Some((u, v)), Some((tu, tv))) = (f.get(x, y), truth.get(x, y)) {
                    epe.push(((u - tu).powi(2) + (v - tv).powi(2)).sqrt());
                }
            }
        }
        assert!(epe.len() > 1000);
        assert!(median(epe) <= 1.0);
    }

    #[test]
    fn size_mismatch() {
        let a = texture(32, 32, 0.0);
        let b = texture(31, 32, 0.0);
        assert!(matches!(lucas_kanade_flow(&a, &b, 2, 9, 2), Err(Error::ImageSizeMismatch { .. })));
    }

    #[test]
    fn flat_image_is_invalid() {
        let a = ImageBuffer::from_fn(48, 48, |_, _| 0.5).unwrap();
        let f = lucas_kanade_flow(&a, &a, 2, 9, 2).unwrap();
        assert_eq!(f.valid().count(), 0);
    }
}
