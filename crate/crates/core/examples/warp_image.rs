//! Warps a procedural texture by a random homography and back, then writes
//! the three images next to each other as PNGs.
//!
//! `cargo run --example warp_image -- out_dir`

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use woftkit::geometry::warp_image;
use woftkit::io::write_image;
use woftkit::synth::{procedural_texture, random_homography};

fn main() -> woftkit::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "warp_out".into()));
    std::fs::create_dir_all(&out).expect("output directory");
    let src = procedural_texture(320, 240, 4);
    let h = random_homography(src.size(), 0.15, &mut ChaCha8Rng::seed_from_u64(4))?;
    let fwd = warp_image(&h, &src, src.size())?;
    let back = warp_image(&h.inverse()?, &fwd.image, src.size())?;

    let inside = back.valid.count();
    println!("{h:?}");
    println!("round trip keeps {inside} of {} pixels, PSNR {:.1} dB", back.valid.data().len(), src.psnr(&back.image)?);
    write_image(&out.join("source.png"), &src)?;
    write_image(&out.join("warped.png"), &fwd.image)?;
    write_image(&out.join("round_trip.png"), &back.image)?;
    println!("wrote {}", out.display());
    Ok(())
}
