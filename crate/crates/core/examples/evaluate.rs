//! Scores two pose traces for the same sequence and prints both precision
//! curves side by side.

use woftkit::bench::{evaluate_run, track_plan, FlowModel, RunConfig, SequenceSuiteSpec, WeightKind};
use woftkit::estimators::EstimatorChoice;
use woftkit::tracker::TrackerConfig;

fn main() -> woftkit::Result<()> {
    let suite = SequenceSuiteSpec { length: 121, ..SequenceSuiteSpec::quick() };
    let plan = suite.plan(1)?;
    let flow = FlowModel::ablation().provider(plan.gt_poses(), suite.flow_seed(1));
    let runs = [
        RunConfig { tracker: TrackerConfig { estimator: EstimatorChoice::Lsq, ..TrackerConfig::default() }, weights: WeightKind::Uniform },
        RunConfig { tracker: TrackerConfig::default(), weights: WeightKind::Fb },
    ];
    let traces = track_plan(&plan, &flow, &runs)?;
    let reports = traces.iter().map(|r| evaluate_run(&plan, r)).collect::<woftkit::Result<Vec<_>>>()?;

    println!("threshold      lsq  weighted");
    for (a, b) in reports[0].curve.iter().zip(&reports[1].curve).step_by(4) {
        println!("{:>9.1} {:>8.3} {:>9.3}", a.threshold, a.precision, b.precision);
    }
    Ok(())
}
