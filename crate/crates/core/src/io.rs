//! On-disk formats: images, homography lists, correspondence files, flow
//! files, pose traces and sequence directories.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimators::{Correspondence, CorrespondenceSet};
use crate::flow::FlowField;
use crate::geometry::{Homography, ImageBuffer, Mask, Point2};
use crate::synth::SequenceRecord;
use crate::tracker::{FrameResult, TrackStatus};

const FLO_TAG: &[u8; 4] = b"PIEH";
/// Components above this magnitude mark an unknown vector.
const FLO_UNKNOWN: f32 = 1e9;

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// 8-bit PNG or binary PGM/PPM, gray or RGB; other layouts are converted.
pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let data = img.to_rgb8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
        ImageBuffer::from_vec(w, h, 3, data)
    } else {
        let data = img.to_luma8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
        ImageBuffer::from_vec(w, h, 1, data)
    }
}

fn image_format(path: &Path) -> Result<image::ImageFormat> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "png" => Ok(image::ImageFormat::Png),
        "pgm" | "ppm" | "pnm" => Ok(image::ImageFormat::Pnm),
        _ => Err(Error::InvalidParameter(format!(
            "{}: unsupported image extension (png, pgm, ppm)",
            path.display()
        ))),
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_image(img: &ImageBuffer, format: image::ImageFormat) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    let dynimg = if img.channels() == 1 {
        image::DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("sizes agree"))
    } else {
        image::DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, bytes).expect("sizes agree"))
    };
    let mut out = std::io::Cursor::new(Vec::new());
    dynimg.write_to(&mut out, format)?;
    Ok(out.into_inner())
}

pub fn write_image(path: &Path, img: &ImageBuffer) -> Result<()> {
    write_atomic(path, &encode_image(img, image_format(path)?)?)
}

/// Any nonzero pixel is inside the mask.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = read_image(path)?.to_gray();
    let data = img.data().iter().map(|&v| v > 0.0).collect();
    Mask::from_vec(img.width(), img.height(), data)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let data = mask.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    write_image(path, &ImageBuffer::from_vec(mask.width(), mask.height(), 1, data)?)
}

/// Nine numbers, row-major. A line made only of `nan` entries means
/// "no homography" (e.g. an unannotated frame).
pub fn parse_homography_line(line: &str) -> Result<Option<Homography>> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::parse("homography", format!("{t:?}: {e}"))))
        .collect::<Result<_>>()?;
    let arr: [f64; 9] = vals
        .try_into()
        .map_err(|v: Vec<f64>| Error::parse("homography", format!("expected 9 numbers, found {}", v.len())))?;
    if arr.iter().all(|v| v.is_nan()) {
        return Ok(None);
    }
    Homography::from_row_major(&arr).map(Some)
}

pub fn format_homography(h: &Homography) -> String {
    h.to_string()
}

/// One entry per non-blank, non-`#` line.
pub fn read_homographies(path: &Path) -> Result<Vec<Option<Homography>>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            parse_homography_line(l).map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 1), e.to_string()))
        })
        .collect()
}

pub fn write_homographies(path: &Path, hs: &[Option<Homography>]) -> Result<()> {
    let mut s = String::new();
    for h in hs {
        match h {
            Some(h) => s.push_str(&format_homography(h)),
            None => s.push_str(&["nan"; 9].join(" ")),
        }
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// `x y x' y' [w]` per line; `#` starts a comment. Either every pair has a
/// weight or none does.
pub fn parse_correspondences(text: &str) -> Result<CorrespondenceSet> {
    let mut pairs = Vec::new();
    let mut weights = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let ctx = || format!("correspondences line {}", i + 1);
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::parse(ctx(), format!("{t:?}: {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != 4 && v.len() != 5 {
            return Err(Error::parse(ctx(), format!("expected 4 or 5 numbers, found {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(ctx(), "non-finite value"));
        }
        pairs.push(Correspondence::new(Point2::new(v[0], v[1]), Point2::new(v[2], v[3])));
        if let Some(&w) = v.get(4) {
            weights.push(w);
        }
    }
    match weights.len() {
        0 => Ok(CorrespondenceSet::new(pairs)),
        n if n == pairs.len() => CorrespondenceSet::with_weights(pairs, weights),
        n => Err(Error::parse(
            "correspondences",
            format!("{n} of {} lines carry a weight; need all or none", pairs.len()),
        )),
    }
}

pub fn read_correspondences(path: &Path) -> Result<CorrespondenceSet> {
    parse_correspondences(&read_text(path)?)
}

pub fn format_correspondences(c: &CorrespondenceSet) -> String {
    let mut s = String::new();
    for (i, p) in c.pairs().iter().enumerate() {
        s.push_str(&format!("{} {} {} {}", p.p.x, p.p.y, p.p_prime.x, p.p_prime.y));
        if let Some(w) = c.weights() {
            s.push_str(&format!(" {}", w[i]));
        }
        s.push('\n');
    }
    s
}

pub fn write_correspondences(path: &Path, c: &CorrespondenceSet) -> Result<()> {
    write_atomic(path, format_correspondences(c).as_bytes())
}

/// Middlebury `.flo`: tag, width, height, then interleaved `u v` f32.
pub fn encode_flo(f: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * f.width() * f.height());
    out.extend_from_slice(FLO_TAG);
    out.extend_from_slice(&(f.width() as i32).to_le_bytes());
    out.extend_from_slice(&(f.height() as i32).to_le_bytes());
    for y in 0..f.height() {
        for x in 0..f.width() {
            let (u, v) = f.get(x, y).map_or((f32::MAX, f32::MAX), |(u, v)| (u as f32, v as f32));
            out.extend_from_slice(&u.to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_flo(bytes: &[u8], context: &str) -> Result<FlowField> {
    let bad = |m: &str| Error::parse(context, m);
    if bytes.len() < 12 || &bytes[0..4] != FLO_TAG {
        return Err(bad("missing PIEH tag"));
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 {
        return Err(bad("non-positive dimensions"));
    }
    let (w, h) = (w as usize, h as usize);
    if bytes.len() != 12 + 8 * w * h {
        return Err(bad("payload length does not match dimensions"));
    }
    let mut f = FlowField::invalid(w, h);
    for (i, chunk) in bytes[12..].chunks_exact(8).enumerate() {
        let u = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
        let v = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
        if u.is_finite() && v.is_finite() && u.abs() <= FLO_UNKNOWN && v.abs() <= FLO_UNKNOWN {
            f.set(i % w, i / w, Some((u as f64, v as f64)));
        }
    }
    Ok(f)
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes, &path.display().to_string())
}

pub fn write_flo(path: &Path, f: &FlowField) -> Result<()> {
    write_atomic(path, &encode_flo(f))
}

/// `frame_index status inlier_ratio h11 … h33`.
pub fn format_pose_line(r: &FrameResult) -> String {
    format!("{} {} {} {}", r.frame_index, r.status, r.inlier_ratio, format_homography(&r.pose))
}

/// One parsed pose-trace line.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseRecord {
    pub frame_index: usize,
    pub status: TrackStatus,
    pub inlier_ratio: f64,
    pub pose: Homography,
}

pub fn parse_pose_trace(text: &str) -> Result<Vec<PoseRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ctx = format!("pose trace line {}", i + 1);
        let mut it = line.splitn(4, char::is_whitespace);
        let (Some(idx), Some(status), Some(ratio), Some(rest)) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(Error::parse(ctx, "expected index, status, ratio and nine numbers"));
        };
        let frame_index = idx.parse().map_err(|e| Error::parse(&ctx, format!("{e}")))?;
        let inlier_ratio = ratio.parse().map_err(|e| Error::parse(&ctx, format!("{e}")))?;
        let status = status.parse().map_err(|e: Error| Error::parse(&ctx, e.to_string()))?;
        let pose = parse_homography_line(rest)
            .map_err(|e| Error::parse(&ctx, e.to_string()))?
            .ok_or_else(|| Error::parse(&ctx, "pose may not be nan"))?;
        out.push(PoseRecord {
            frame_index,
            status,
            inlier_ratio,
            pose,
        });
    }
    Ok(out)
}

pub fn read_pose_trace(path: &Path) -> Result<Vec<PoseRecord>> {
    parse_pose_trace(&read_text(path)?).map_err(|e| match e {
        Error::Parse { context, message } => Error::parse(format!("{}: {context}", path.display()), message),
        other => other,
    })
}

pub fn write_pose_trace(path: &Path, results: &[FrameResult]) -> Result<()> {
    let mut s = String::new();
    for r in results {
        s.push_str(&format_pose_line(r));
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// A sequence directory: numbered frames, `gt.txt` and `mask.png`.
/// Frames load on demand.
#[derive(Clone, Debug)]
pub struct SequenceDir {
    pub root: PathBuf,
    pub frame_paths: Vec<PathBuf>,
    pub gt: Vec<Option<Homography>>,
    pub mask: Mask,
}

pub const GT_FILE: &str = "gt.txt";
pub const MASK_FILE: &str = "mask.png";

pub fn frame_file_name(t: usize) -> String {
    format!("{t:06}.png")
}

impl SequenceDir {
    pub fn open(root: &Path) -> Result<Self> {
        let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        let mut frames: Vec<(u64, PathBuf)> = Vec::new();
        for entry in entries {
            let p = entry.map_err(|e| Error::io(root, e))?.path();
            let (Some(stem), Some(ext)) = (p.file_stem().and_then(|s| s.to_str()), p.extension().and_then(|s| s.to_str()))
            else {
                continue;
            };
            let ext = ext.to_ascii_lowercase();
            if !matches!(ext.as_str(), "png" | "pgm" | "ppm") || !stem.bytes().all(|b| b.is_ascii_digit()) {
                continue;
            }
            if let Ok(n) = stem.parse() {
                frames.push((n, p));
            }
        }
        frames.sort();
        if frames.is_empty() {
            return Err(Error::EmptyInput("sequence frames"));
        }
        let gt_path = root.join(GT_FILE);
        let gt = if gt_path.is_file() {
            read_homographies(&gt_path)?
        } else {
            vec![None; frames.len()]
        };
        let mask = read_mask(&root.join(MASK_FILE))?;
        Ok(Self {
            root: root.to_path_buf(),
            frame_paths: frames.into_iter().map(|(_, p)| p).collect(),
            gt,
            mask,
        })
    }

    pub fn len(&self) -> usize {
        self.frame_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_paths.is_empty()
    }

    pub fn load_frame(&self, t: usize) -> Result<ImageBuffer> {
        let p = self
            .frame_paths
            .get(t)
            .ok_or_else(|| Error::InvalidParameter(format!("frame {t} out of range")))?;
        read_image(p)
    }
}

/// Writes frames as they are produced, then `gt.txt` and `mask.png`.
pub fn write_sequence_streaming<I>(root: &Path, frames: I, gt: &[Homography], mask: &Mask) -> Result<()>
where
    I: IntoIterator<Item = Result<ImageBuffer>>,
{
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut n = 0;
    for (t, frame) in frames.into_iter().enumerate() {
        write_image(&root.join(frame_file_name(t)), &frame?)?;
        n += 1;
    }
    if n != gt.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            actual: n,
        });
    }
    write_homographies(&root.join(GT_FILE), &gt.iter().copied().map(Some).collect::<Vec<_>>())?;
    write_mask(&root.join(MASK_FILE), mask)
}

pub fn write_sequence(root: &Path, seq: &SequenceRecord) -> Result<()> {
    write_sequence_streaming(root, seq.frames.iter().cloned().map(Ok), &seq.gt_poses, &seq.template_mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homography_lines() {
        let h = Homography::from_row_major(&[1.1, 0.02, 3.5, -0.01, 0.97, -2.25, 1e-4, -2e-5, 1.0]).unwrap();
        let back = parse_homography_line(&format_homography(&h)).unwrap().unwrap();
        assert_eq!(back, h);
        assert_eq!(parse_homography_line("nan nan nan nan nan nan nan nan nan").unwrap(), None);
        assert!(parse_homography_line("1 0 0 0 1 0 0 0").is_err());
        assert!(parse_homography_line("1 0 0 0 1 0 0 0 x").is_err());
    }

    #[test]
    fn correspondence_file() {
        let text = "# header\n0 0 1 1\n2 3 4 5 # trailing\n\n";
        let c = parse_correspondences(text).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.weights().is_none());
        let w = parse_correspondences("0 0 1 1 0.5\n1 1 2 2 1\n").unwrap();
        assert_eq!(w.weights().unwrap(), &[0.5, 1.0]);
        assert_eq!(parse_correspondences(&format_correspondences(&w)).unwrap(), w);
        assert!(parse_correspondences("0 0 1 1 0.5\n1 1 2 2\n").is_err());
        assert!(parse_correspondences("0 0 1\n").is_err());
        assert!(parse_correspondences("0 0 1 1 1.5\n").is_err());
    }

    #[test]
    fn flo_round_trip() {
        let mut f = FlowField::zeros(3, 2);
        f.set(1, 0, Some((1.5, -2.25)));
        f.set(2, 1, None);
        let back = decode_flo(&encode_flo(&f), "test").unwrap();
        assert_eq!(back, f);
        assert!(decode_flo(b"XXXX", "test").is_err());
        let mut truncated = encode_flo(&f);
        truncated.pop();
        assert!(decode_flo(&truncated, "test").is_err());
    }

    #[test]
    fn images_and_masks_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuffer::from_fn(5, 4, |x, y| ((x + 3 * y) as f32) / 20.0).unwrap();
        for name in ["a.png", "a.pgm"] {
            let p = dir.path().join(name);
            write_image(&p, &img).unwrap();
            let back = read_image(&p).unwrap();
            assert_eq!(back.channels(), 1);
            assert!(back.mean_abs_diff(&img).unwrap() <= 0.5 / 255.0 + 1e-6);
        }
        let rgb = ImageBuffer::from_vec(2, 1, 3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let p = dir.path().join("c.ppm");
        write_image(&p, &rgb).unwrap();
        assert_eq!(read_image(&p).unwrap(), rgb);
        let m = Mask::rectangle(6, 5, 1, 1, 4, 3);
        write_mask(&dir.path().join("m.png"), &m).unwrap();
        assert_eq!(read_mask(&dir.path().join("m.png")).unwrap(), m);
        assert!(write_image(&dir.path().join("x.bmp"), &img).is_err());
    }

    #[test]
    fn pose_trace_round_trip() {
        let r = FrameResult {
            frame_index: 3,
            pose: Homography::translation(1.25, -4.0),
            status: TrackStatus::Lost,
            inlier_ratio: 0.125,
            used_local_fallback: true,
            local_homography: None,
            correspondences: 10,
        };
        let line = format_pose_line(&r);
        assert!(line.starts_with("3 lost 0.125 "));
        let parsed = parse_pose_trace(&line).unwrap();
        assert_eq!(parsed[0].pose, r.pose);
        assert_eq!(parsed[0].status, TrackStatus::Lost);
        assert!(parse_pose_trace("1 flying 0.5 1 0 0 0 1 0 0 0 1").is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
