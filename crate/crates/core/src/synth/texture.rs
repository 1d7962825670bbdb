use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::ImageBuffer;

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Grayscale procedural texture: four octaves of value noise under a few
/// dozen flat ellipses and rectangles. Deterministic in `seed`.
pub fn procedural_texture(width: usize, height: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0f64; width * height];
    let mut amp = 0.5;
    for cell in [48.0, 20.0, 9.0, 4.0] {
        let gw = (width as f64 / cell).ceil() as usize + 2;
        let gh = (height as f64 / cell).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
        for y in 0..height {
            let gy = y as f64 / cell;
            let (iy, fy) = (gy.floor() as usize, smooth(gy.fract()));
            for x in 0..width {
                let gx = x as f64 / cell;
                let (ix, fx) = (gx.floor() as usize, smooth(gx.fract()));
                let l = |i: usize, j: usize| lattice[j * gw + i];
                let top = l(ix, iy) * (1.0 - fx) + l(ix + 1, iy) * fx;
                let bot = l(ix, iy + 1) * (1.0 - fx) + l(ix + 1, iy + 1) * fx;
                acc[y * width + x] += amp * (top * (1.0 - fy) + bot * fy);
            }
        }
        amp *= 0.6;
    }
    let (w, h) = (width as f64, height as f64);
    let shapes = 12 + (width * height) / 4000;
    for _ in 0..shapes {
        let cx = rng.random_range(0.0..w);
        let cy = rng.random_range(0.0..h);
        let rx = rng.random_range(3.0..(w / 8.0).max(4.0));
        let ry = rng.random_range(3.0..(h / 8.0).max(4.0));
        let level = rng.random_range(0.0..1.2);
        let ellipse = rng.random_bool(0.5);
        let x0 = (cx - rx).max(0.0) as usize;
        let x1 = ((cx + rx).ceil() as usize).min(width);
        let y0 = (cy - ry).max(0.0) as usize;
        let y1 = ((cy + ry).ceil() as usize).min(height);
        for y in y0..y1 {
            for x in x0..x1 {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                if !ellipse || dx * dx + dy * dy <= 1.0 {
                    acc[y * width + x] = level;
                }
            }
        }
    }
    let (lo, hi) = acc.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(1e-9);
    ImageBuffer::from_vec(
        width,
        height,
        1,
        acc.iter().map(|&v| (0.05 + 0.9 * (v - lo) / span) as f32).collect(),
    )
    .expect("sizes agree")
}

/// Repeated 3×3 binomial smoothing with clamped edges, per channel.
pub fn binomial_blur(img: &ImageBuffer, passes: usize) -> ImageBuffer {
    let mut cur = img.clone();
    let mut tmp = img.clone();
    for _ in 0..passes {
        blur_axis(&cur, &mut tmp, true);
        blur_axis(&tmp, &mut cur, false);
    }
    cur
}

fn blur_axis(src: &ImageBuffer, dst: &mut ImageBuffer, horizontal: bool) {
    let (w, h) = src.size();
    for c in 0..src.channels() {
        for y in 0..h {
            for x in 0..w {
                let (a, b) = if horizontal {
                    (src.get(x.saturating_sub(1), y, c), src.get((x + 1).min(w - 1), y, c))
                } else {
                    (src.get(x, y.saturating_sub(1), c), src.get(x, (y + 1).min(h - 1), c))
                };
                dst.set(x, y, c, 0.25 * a + 0.5 * src.get(x, y, c) + 0.25 * b);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = procedural_texture(64, 48, 3);
        assert_eq!(a, procedural_texture(64, 48, 3));
        assert_ne!(a, procedural_texture(64, 48, 4));
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let mean = a.data().iter().map(|&v| v as f64).sum::<f64>() / a.data().len() as f64;
        let var = a.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / a.data().len() as f64;
        assert!(var > 0.005);
    }
}
