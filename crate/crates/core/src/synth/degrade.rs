use std::f64::consts::PI;
use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ImageBuffer;

/// Standard JPEG luminance quantization table, row-major.
const LUMA: [f64; 64] = [
    16., 11., 10., 16., 24., 40., 51., 61., 12., 12., 14., 19., 26., 58., 60., 55., 14., 13., 16., 24., 40., 57., 69., 56.,
    14., 17., 22., 29., 51., 87., 80., 62., 18., 22., 37., 56., 68., 109., 103., 77., 24., 35., 55., 64., 81., 104., 113.,
    92., 49., 64., 78., 87., 103., 121., 120., 101., 72., 92., 95., 98., 112., 100., 103., 99.,
];

/// How [`degrade_with`] loses information.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DegradeMethod {
    /// In-process 8×8 DCT quantization with quality-scaled tables.
    #[default]
    Transform,
    /// Round trip through a real JPEG encoder and decoder.
    Codec,
}

fn quant_table(quality: u8) -> [f64; 64] {
    let q = quality.clamp(1, 100) as f64;
    let scale = if q < 50.0 { 5000.0 / q } else { 200.0 - 2.0 * q };
    LUMA.map(|t| ((t * scale + 50.0) / 100.0).floor().clamp(1.0, 255.0))
}

fn dct_basis() -> [[f64; 8]; 8] {
    let mut c = [[0.0; 8]; 8];
    for (k, row) in c.iter_mut().enumerate() {
        let a = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (n, v) in row.iter_mut().enumerate() {
            *v = a * ((2 * n + 1) as f64 * k as f64 * PI / 16.0).cos();
        }
    }
    c
}

pub fn degrade(img: &ImageBuffer, quality: u8) -> ImageBuffer {
    degrade_with(img, quality, DegradeMethod::Transform).expect("transform path cannot fail")
}

/// Blockwise compression loss at a JPEG-style quality in `1..=100`.
/// Channels are processed independently with the luminance table.
pub fn degrade_with(img: &ImageBuffer, quality: u8, method: DegradeMethod) -> Result<ImageBuffer> {
    match method {
        DegradeMethod::Transform => Ok(transform(img, quality)),
        DegradeMethod::Codec => codec(img, quality),
    }
}

fn transform(img: &ImageBuffer, quality: u8) -> ImageBuffer {
    let q = quant_table(quality);
    let c = dct_basis();
    let mut ct = [[0.0; 8]; 8];
    for (u, row) in c.iter().enumerate() {
        for (n, &v) in row.iter().enumerate() {
            ct[n][u] = v;
        }
    }
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut out = img.clone();
    let mut block = [[0.0f64; 8]; 8];
    let mut tmp = [[0.0f64; 8]; 8];
    for k in 0..ch {
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                for (j, row) in block.iter_mut().enumerate() {
                    for (i, v) in row.iter_mut().enumerate() {
                        let (x, y) = ((bx + i).min(w - 1), (by + j).min(h - 1));
                        *v = img.get(x, y, k) as f64 * 255.0 - 128.0;
                    }
                }
                // forward: C · B · Cᵀ
                mat_mul(&c, &block, &mut tmp, false);
                mat_mul(&tmp, &c, &mut block, true);
                for (u, row) in block.iter_mut().enumerate() {
                    for (v, f) in row.iter_mut().enumerate() {
                        let step = q[u * 8 + v];
                        *f = (*f / step).round() * step;
                    }
                }
                // inverse: Cᵀ · F · C
                mat_mul(&ct, &block, &mut tmp, false);
                mat_mul(&tmp, &ct, &mut block, true);
                for (j, row) in block.iter().enumerate().take(8.min(h - by)) {
                    for (i, &s) in row.iter().enumerate().take(8.min(w - bx)) {
                        out.set(bx + i, by + j, k, (((s + 128.0) / 255.0).clamp(0.0, 1.0)) as f32);
                    }
                }
            }
        }
    }
    out
}

/// `out = a · b`, or `a · bᵀ` when `transpose_b`.
#[inline]
fn mat_mul(a: &[[f64; 8]; 8], b: &[[f64; 8]; 8], out: &mut [[f64; 8]; 8], transpose_b: bool) {
    for (r, row) in out.iter_mut().enumerate() {
        for (col, o) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for n in 0..8 {
                s += a[r][n] * if transpose_b { b[col][n] } else { b[n][col] };
            }
            *o = s;
        }
    }
}

fn codec(img: &ImageBuffer, quality: u8) -> Result<ImageBuffer> {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let bytes: Vec<u8> = img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let color = if ch == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality.clamp(1, 100))
        .encode(&bytes, w as u32, h as u32, color)
        .map_err(Error::Image)?;
    let decoded = image::load(Cursor::new(buf), image::ImageFormat::Jpeg)?;
    let data: Vec<f32> = if ch == 1 {
        decoded.to_luma8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect()
    } else {
        decoded.to_rgb8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect()
    };
    ImageBuffer::from_vec(w, h, ch, data)
}

/// Linear motion blur: box profile of `length` pixels along `angle`
/// (radians), sampled at unit spacing with edge clamping.
pub fn motion_blur(img: &ImageBuffer, length: f64, angle: f64) -> ImageBuffer {
    if length < 1e-3 {
        return img.clone();
    }
    let taps = length.ceil() as usize + 1;
    let (dx, dy) = (angle.cos(), angle.sin());
    let offsets: Vec<f64> = (0..taps)
        .map(|i| -length / 2.0 + length * i as f64 / (taps - 1) as f64)
        .collect();
    let mut out = img.clone();
    let norm = 1.0 / taps as f32;
    let (w, h) = img.size();
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    // away from the border every pixel sees the same integer offsets and
    // bilinear weights per tap
    let kernel: Vec<(isize, isize, [f32; 4])> = offsets
        .iter()
        .map(|&o| {
            let (ox, oy) = (o * dx, o * dy);
            let (ix, iy) = (ox.floor(), oy.floor());
            let (fx, fy) = ((ox - ix) as f32, (oy - iy) as f32);
            let wts = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
            (ix as isize, iy as isize, wts)
        })
        .collect();
    let lo_x = -kernel.iter().map(|k| k.0).min().unwrap_or(0);
    let lo_y = -kernel.iter().map(|k| k.1).min().unwrap_or(0);
    let hi_x = kernel.iter().map(|k| k.0).max().unwrap_or(0) + 1;
    let hi_y = kernel.iter().map(|k| k.1).max().unwrap_or(0) + 1;
    let ch = img.channels();
    let data = img.data();
    for k in 0..ch {
        for y in 0..h {
            let inner_y = y as isize >= lo_y && y as isize + hi_y < h as isize;
            for x in 0..w {
                let mut s = 0.0f32;
                if inner_y && x as isize >= lo_x && x as isize + hi_x < w as isize {
                    for &(ix, iy, [w00, w10, w01, w11]) in &kernel {
                        let i = ((y as isize + iy) as usize * w + (x as isize + ix) as usize) * ch + k;
                        let j = i + w * ch;
                        s += w00 * data[i] + w10 * data[i + ch] + w01 * data[j] + w11 * data[j + ch];
                    }
                } else {
                    for &o in &offsets {
                        let sx = (x as f64 + o * dx).clamp(0.0, xmax);
                        let sy = (y as f64 + o * dy).clamp(0.0, ymax);
                        s += img.sample(sx, sy, k).unwrap_or(0.0);
                    }
                }
                out.set(x, y, k, s * norm);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::procedural_texture;

    #[test]
    fn blur_matches_direct_sampling() {
        let gray = procedural_texture(48, 40, 9);
        let rgb = gray.data().iter().flat_map(|&v| [v, 1.0 - v, v * v]).collect();
        let img = ImageBuffer::from_vec(48, 40, 3, rgb).unwrap();
        for (len, angle) in [(0.6, 0.0), (3.0, 0.7), (5.5, 2.4), (8.0, -1.3)] {
            let out = motion_blur(&img, len, angle);
            let taps = (len as f64).ceil() as usize + 1;
            for (x, y, k) in [(0, 0, 0), (20, 17, 1), (47, 39, 2), (5, 33, 0), (30, 2, 1)] {
                let mut s = 0.0f32;
                for i in 0..taps {
                    let o = -len / 2.0 + len * i as f64 / (taps - 1) as f64;
                    let sx = (x as f64 + o * angle.cos()).clamp(0.0, 47.0);
                    let sy = (y as f64 + o * angle.sin()).clamp(0.0, 39.0);
                    s += img.sample(sx, sy, k).unwrap();
                }
                assert!((out.get(x, y, k) - s / taps as f32).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn ijg_scaling() {
        assert!(quant_table(100).iter().all(|&v| v == 1.0));
        assert_eq!(quant_table(50), LUMA);
        assert_eq!(quant_table(25)[0], 32.0);
    }

    #[test]
    fn dct_is_orthonormal() {
        let c = dct_basis();
        for a in 0..8 {
            for b in 0..8 {
                let d: f64 = (0..8).map(|n| c[a][n] * c[b][n]).sum();
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quality_ladder() {
        for seed in 0..4 {
            let img = procedural_texture(96, 72, seed);
            assert!(img.mean_abs_diff(&degrade(&img, 100)).unwrap() < 1.0 / 255.0);
            let p25 = img.psnr(&degrade(&img, 25)).unwrap();
            let p50 = img.psnr(&degrade(&img, 50)).unwrap();
            assert!(p50 >= p25);
            assert!((28.0..=38.0).contains(&p25), "psnr {p25}");
        }
    }

    #[test]
    fn deterministic() {
        let img = procedural_texture(40, 30, 1);
        assert_eq!(degrade(&img, 25), degrade(&img, 25));
    }

    #[test]
    fn codec_round_trip() {
        let img = procedural_texture(64, 48, 2);
        let out = degrade_with(&img, 25, DegradeMethod::Codec).unwrap();
        assert_eq!(out.size(), img.size());
        let p = img.psnr(&out).unwrap();
        assert!(p > 20.0 && p < 45.0);
    }

    #[test]
    fn blur_preserves_constant_and_mean() {
        let flat = ImageBuffer::from_fn(20, 20, |_, _| 0.4).unwrap();
        let b = motion_blur(&flat, 7.0, 0.3);
        assert!(b.data().iter().all(|&v| (v - 0.4).abs() < 1e-6));
        let img = procedural_texture(40, 30, 5);
        assert_eq!(motion_blur(&img, 0.0, 1.0), img);
        assert!(img.psnr(&motion_blur(&img, 10.0, 0.0)).unwrap() < 40.0);
    }
}
