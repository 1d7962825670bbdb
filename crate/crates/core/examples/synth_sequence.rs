//! Generates a short degraded sequence with ground-truth poses and writes it
//! in the on-disk layout the tracker reads.
//!
//! `cargo run --example synth_sequence -- out_dir`

use std::path::PathBuf;

use woftkit::io::write_sequence;
use woftkit::synth::{make_sequence, procedural_texture, PairSpec};

fn main() -> woftkit::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "seq_out".into()));
    let spec = PairSpec { rng_seed: 21, ..PairSpec::default() };
    let seq = make_sequence(&procedural_texture(240, 180, 21), 30, 0.5, &spec)?;
    for (t, label) in seq.labels.iter().enumerate().step_by(5) {
        println!("frame {t:>2}: blur {:>5.2} px at {:>6.3} rad", label.blur_len, label.blur_angle);
    }
    write_sequence(&out, &seq)?;
    println!("wrote {} frames to {}", seq.len(), out.display());
    Ok(())
}
