//! Four estimators on one contaminated correspondence set: 40 % of the
//! pairs are random vectors, and forward–backward weights mark them.

use woftkit::bench::{contaminated_instance, InstanceSuiteSpec};
use woftkit::estimators::{estimate, EstimatorChoice, EstimatorConfig};
use woftkit::eval::alignment_error;
use woftkit::geometry::Point2;

fn main() -> woftkit::Result<()> {
    let spec = InstanceSuiteSpec::default();
    let inst = contaminated_instance(&spec, 0)?;
    let (w, h) = (spec.size.0 as f64 - 1.0, spec.size.1 as f64 - 1.0);
    let corners = [Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(w, h), Point2::new(0.0, h)];
    let outliers = inst.outlier.iter().filter(|&&o| o).count();
    println!("{} pairs, {outliers} outliers", inst.correspondences.len());

    let weighted = inst.with_fb_weights();
    for choice in EstimatorChoice::ALL {
        let cfg = EstimatorConfig { choice, ..EstimatorConfig::default() };
        let r = estimate(&weighted, &cfg, 1)?;
        let err = alignment_error(&r.homography, &inst.h_gt, &corners)?;
        println!("{:<13} corner error {err:>9.3} px, {} inliers", choice.name(), r.inlier_mask.iter().filter(|&&b| b).count());
    }
    Ok(())
}
