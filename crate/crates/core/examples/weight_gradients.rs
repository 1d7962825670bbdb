//! Sensitivity of the reprojection loss to each pair's weight. Pairs whose
//! gradient is most positive hurt the estimate; a descent step on the
//! weights lowers the loss.

use woftkit::autodiff::gradcheck::{run_random, GradcheckConfig};
use woftkit::autodiff::grad_loss_wrt_weights;
use woftkit::bench::{contaminated_instance, InstanceSuiteSpec};
use woftkit::estimators::solve_weighted_lsq;
use woftkit::eval::reprojection_loss;

fn main() -> woftkit::Result<()> {
    let spec = InstanceSuiteSpec { outlier_fraction: 0.1, max_samples: 120, ..InstanceSuiteSpec::default() };
    let inst = contaminated_instance(&spec, 3)?;
    let mut c = inst.correspondences.clone();
    c.set_weights(vec![0.5; c.len()])?;
    let pts: Vec<_> = c.pairs().iter().map(|p| p.p).collect();

    let g = grad_loss_wrt_weights(&c, &inst.h_gt, &pts)?;
    let dl = g.d_loss_d_w.expect("loss attached");
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| dl[b].total_cmp(&dl[a]));
    println!("loss at uniform weights {:.4} px", g.loss.unwrap_or(f64::NAN));
    for &i in &order[..5] {
        println!("pair {i:>3}: dL/dw {:+.4e}, labelled outlier {}", dl[i], inst.outlier[i]);
    }

    let stepped: Vec<f64> = (0..c.len()).map(|i| (0.5 - 20.0 * dl[i]).clamp(0.01, 1.0)).collect();
    c.set_weights(stepped)?;
    let after = reprojection_loss(&solve_weighted_lsq(&c)?.homography, &inst.h_gt, &pts)?;
    println!("after one projected descent step {after:.4} px");

    let s = run_random(&GradcheckConfig { instances: 10, ..GradcheckConfig::default() });
    println!("finite-difference check on 10 instances: max relative error {:.2e}", s.max_rel_error);
    Ok(())
}
