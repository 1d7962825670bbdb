//! Dense pyramidal Lucas–Kanade on a synthetic pair, forward–backward
//! weights, and a weighted fit of the homography relating the two views.

use woftkit::estimators::{solve_lsq, solve_weighted_lsq, Conditioning};
use woftkit::eval::alignment_error;
use woftkit::flow::{flow_to_correspondences_with, lucas_kanade_flow_with, weights_fb_consistency, LkParams, SampleOptions};
use woftkit::geometry::{Mask, Point2};
use woftkit::synth::{binomial_blur, make_pair, procedural_texture, PairSpec};

fn main() -> woftkit::Result<()> {
    let src = binomial_blur(&procedural_texture(200, 150, 6), 2);
    let spec = PairSpec { corner_perturbation_frac: 0.04, blur_max_len: 0.0, degrade_quality: 100, rng_seed: 6, ..PairSpec::default() };
    let (a, b, gt) = make_pair(&src, &spec)?;
    let params = LkParams::default();
    let fwd = lucas_kanade_flow_with(&a, &b, &params)?;
    let bwd = lucas_kanade_flow_with(&b, &a, &params)?;
    let w = weights_fb_consistency(&fwd, &bwd, 2.0)?;

    let mask = Mask::rectangle(200, 150, 20, 15, 180, 135);
    let opts = SampleOptions { weights: Some(&w), target_valid: None };
    let c = flow_to_correspondences_with(&fwd, &mask, b.size(), 800, 1, opts)?;
    let refs = [Point2::new(20.0, 15.0), Point2::new(179.0, 15.0), Point2::new(179.0, 134.0), Point2::new(20.0, 134.0)];
    let plain = solve_lsq(&c, Conditioning::Hartley)?.homography;
    let weighted = solve_weighted_lsq(&c)?.homography;
    println!("valid flow at {} of {} pixels", fwd.valid().count(), 200 * 150);
    println!("lsq          e_AL {:.3} px", alignment_error(&plain, &gt, &refs)?);
    println!("weighted lsq e_AL {:.3} px", alignment_error(&weighted, &gt, &refs)?);
    Ok(())
}
