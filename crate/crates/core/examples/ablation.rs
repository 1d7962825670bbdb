//! Estimator × pre-warp cross product on a small seeded suite, printed as
//! the CSV the `ablate` subcommand writes.

use woftkit::bench::{ablation_csv, ablation_violations, run_ablation, FlowModel, SequenceSuiteSpec};
use woftkit::estimators::EstimatorChoice;
use woftkit::tracker::{PreWarpMode, TrackerConfig};

fn main() -> woftkit::Result<()> {
    let suite = SequenceSuiteSpec { count: 2, ..SequenceSuiteSpec::quick() };
    let rows = run_ablation(&suite, &FlowModel::ablation(), &TrackerConfig::default(), &EstimatorChoice::ALL, &PreWarpMode::ALL, 1)?;
    print!("{}", ablation_csv(&rows));
    for v in ablation_violations(&rows, 1.0) {
        println!("ordering violated: {v}");
    }
    Ok(())
}
