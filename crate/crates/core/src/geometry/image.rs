use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2};

/// Row-major image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::from_vec(width, height, channels, vec![0.0; width * height * channels])
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::LengthMismatch {
                expected: width * height * channels,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Grayscale image from a closure over pixel coordinates.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_vec(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Bilinear sample; `None` outside `[0, w-1] × [0, h-1]`.
    #[inline(always)]
    pub fn sample(&self, x: f64, y: f64, c: usize) -> Option<f32> {
        bilinear(&self.data, self.width, self.height, self.channels, x, y, c)
    }

    /// Bilinear sample with coordinates clamped to the image.
    #[inline]
    pub fn sample_clamped(&self, x: f64, y: f64, c: usize) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        self.sample(x, y, c).unwrap_or(0.0)
    }

    /// Luminance (Rec. 601 weights); grayscale images are returned as-is.
    pub fn to_gray(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Box-filter downscale by an integer factor. Trailing rows/columns that
    /// do not fill a whole block are dropped.
    pub fn downscale(&self, s: usize) -> Result<ImageBuffer> {
        if s == 0 {
            return Err(Error::InvalidParameter("downscale factor must be ≥ 1".into()));
        }
        if s == 1 {
            return Ok(self.clone());
        }
        let (w, h) = (self.width / s, self.height / s);
        let mut out = ImageBuffer::new(w.max(1), h.max(1), self.channels)?;
        let norm = 1.0 / (s * s) as f32;
        for y in 0..out.height {
            for x in 0..out.width {
                for c in 0..self.channels {
                    let mut acc = 0.0;
                    for dy in 0..s {
                        for dx in 0..s {
                            let sx = (x * s + dx).min(self.width - 1);
                            let sy = (y * s + dy).min(self.height - 1);
                            acc += self.get(sx, sy, c);
                        }
                    }
                    out.set(x, y, c, acc * norm);
                }
            }
        }
        Ok(out)
    }

    pub fn mean_abs_diff(&self, other: &ImageBuffer) -> Result<f64> {
        self.check_same_shape(other)?;
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    /// Peak signal-to-noise ratio in dB for unit peak.
    pub fn psnr(&self, other: &ImageBuffer) -> Result<f64> {
        self.check_same_shape(other)?;
        let mse: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let d = (a - b) as f64;
                d * d
            })
            .sum::<f64>()
            / self.data.len() as f64;
        Ok(if mse == 0.0 {
            f64::INFINITY
        } else {
            -10.0 * mse.log10()
        })
    }

    fn check_same_shape(&self, other: &ImageBuffer) -> Result<()> {
        if self.size() != other.size() || self.channels != other.channels {
            return Err(Error::ImageSizeMismatch {
                expected: self.size(),
                actual: other.size(),
            });
        }
        Ok(())
    }
}

#[inline(always)]
fn bilinear(
    data: &[f32],
    width: usize,
    height: usize,
    channels: usize,
    x: f64,
    y: f64,
    c: usize,
) -> Option<f32> {
    if !(x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64) {
        return None;
    }
    // non-negative here, so truncation is floor; the i64 cast is one instruction
    let x0 = x as i64 as usize;
    let y0 = y as i64 as usize;
    let fx = (x - x0 as f64) as f32;
    let fy = (y - y0 as f64) as f32;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let at = |xx: usize, yy: usize| data[(yy * width + xx) * channels + c];
    let p00 = at(x0, y0);
    let top = if fx == 0.0 { p00 } else { p00 + fx * (at(x1, y0) - p00) };
    if fy == 0.0 {
        return Some(top);
    }
    let p01 = at(x0, y1);
    let bottom = if fx == 0.0 { p01 } else { p01 + fx * (at(x1, y1) - p01) };
    Some(top + fy * (bottom - top))
}

/// Boolean per-pixel grid (template masks, validity masks).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Axis-aligned rectangle `[x0, x1) × [y0, y1)` set to true.
    pub fn rectangle(width: usize, height: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        let mut m = Self::new(width, height, false);
        for y in y0.min(height)..y1.min(height) {
            for x in x0.min(width)..x1.min(width) {
                m.data[y * width + x] = true;
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    /// Nearest-pixel lookup; false outside the grid.
    #[inline]
    pub fn at_point(&self, x: f64, y: f64) -> bool {
        let (rx, ry) = (x.round(), y.round());
        if rx < 0.0 || ry < 0.0 || rx >= self.width as f64 || ry >= self.height as f64 {
            return false;
        }
        self.get(rx as usize, ry as usize)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn all(&self) -> bool {
        self.data.iter().all(|&b| b)
    }

    /// Bounding-box corners of the true pixels, clockwise from top-left.
    pub fn bounding_quad(&self) -> Option<[Point2; 4]> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then(|| {
            [
                Point2::new(x0 as f64, y0 as f64),
                Point2::new(x1 as f64, y0 as f64),
                Point2::new(x1 as f64, y1 as f64),
                Point2::new(x0 as f64, y1 as f64),
            ]
        })
    }

    /// A block is true when any of its pixels is true.
    pub fn downscale(&self, s: usize) -> Mask {
        if s <= 1 {
            return self.clone();
        }
        let (w, h) = ((self.width / s).max(1), (self.height / s).max(1));
        let mut out = Mask::new(w, h, false);
        for y in 0..h {
            for x in 0..w {
                let hit = (0..s).any(|dy| {
                    (0..s).any(|dx| {
                        let sx = (x * s + dx).min(self.width - 1);
                        let sy = (y * s + dy).min(self.height - 1);
                        self.get(sx, sy)
                    })
                });
                out.set(x, y, hit);
            }
        }
        out
    }

    /// Inverse-mapped nearest-pixel warp: `out(y) = self(h⁻¹ y)`.
    pub fn warp(&self, h: &Homography, out_size: (usize, usize)) -> Result<Mask> {
        let inv = h.inverse()?;
        let m = inv.matrix();
        let mut out = Mask::new(out_size.0, out_size.1, false);
        for y in 0..out_size.1 {
            for x in 0..out_size.0 {
                let (xf, yf) = (x as f64, y as f64);
                let z = m[(2, 0)] * xf + m[(2, 1)] * yf + m[(2, 2)];
                if z.abs() <= 1e-12 {
                    continue;
                }
                let sx = (m[(0, 0)] * xf + m[(0, 1)] * yf + m[(0, 2)]) / z;
                let sy = (m[(1, 0)] * xf + m[(1, 1)] * yf + m[(1, 2)]) / z;
                out.data[y * out_size.0 + x] = self.at_point(sx, sy);
            }
        }
        Ok(out)
    }
}

/// Output of [`warp_image`]: warped pixels plus a mask of pixels that
/// sampled inside the source.
#[derive(Clone, Debug)]
pub struct WarpedImage {
    pub image: ImageBuffer,
    pub valid: Mask,
}

/// Inverse-mapping warp with bilinear interpolation: the output at `q`
/// samples `src` at `h⁻¹ q`, so content at `p` in `src` lands at `h p`.
/// Pixels sampling outside `src` are zero and flagged invalid.
pub fn warp_image(h: &Homography, src: &ImageBuffer, out_size: (usize, usize)) -> Result<WarpedImage> {
    let (w, ht) = out_size;
    let inv = h.inverse()?;
    let m = inv.matrix();
    let ch = src.channels();
    let mut image = ImageBuffer::new(w, ht, ch)?;
    let mut valid = Mask::new(w, ht, false);
    let [a, b, c, d, e, f, g, hh, i] = [
        m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)],
    ];
    for y in 0..ht {
        let yf = y as f64;
        for x in 0..w {
            let xf = x as f64;
            let z = g * xf + hh * yf + i;
            if z.abs() <= 1e-12 {
                continue;
            }
            let sx = (a * xf + b * yf + c) / z;
            let sy = (d * xf + e * yf + f) / z;
            let Some(v0) = src.sample(sx, sy, 0) else { continue };
            image.set(x, y, 0, v0);
            for c in 1..ch {
                image.set(x, y, c, src.sample(sx, sy, c).unwrap_or(0.0));
            }
            valid.set(x, y, true);
        }
    }
    Ok(WarpedImage { image, valid })
}
