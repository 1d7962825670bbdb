//! Tracks one synthetic sequence under contaminated flow with the default
//! configuration and reports the lost frames and P@5 / P@15.

use woftkit::bench::{evaluate_run, track_plan, FlowModel, RunConfig, SequenceSuiteSpec, WeightKind};
use woftkit::tracker::{TrackStatus, TrackerConfig};

fn main() -> woftkit::Result<()> {
    let suite = SequenceSuiteSpec { length: 151, ..SequenceSuiteSpec::default() };
    let plan = suite.plan(0)?;
    let flow = FlowModel::contaminated().provider(plan.gt_poses(), suite.flow_seed(0)).with_corrupted_frames([60, 61, 62]);
    let run = RunConfig { tracker: TrackerConfig::default(), weights: WeightKind::Fb };
    let results = track_plan(&plan, &flow, std::slice::from_ref(&run))?.remove(0);

    let lost: Vec<usize> = results.iter().filter(|r| r.status == TrackStatus::Lost).map(|r| r.frame_index).collect();
    println!("lost frames: {lost:?}");
    let report = evaluate_run(&plan, &results)?;
    for tp in &report.p_at {
        println!("P@{} = {:.4}", tp.threshold, tp.precision);
    }
    Ok(())
}
