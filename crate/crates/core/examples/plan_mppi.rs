//! MPPI, CEM and random sequences on the ground-truth shaped reward, and
//! MPPI on a learned text-goal reward when a checkpoint is given.
//!
//! cargo run --release --example plan_mppi -- [checkpoint-dir]

use std::path::Path;

use liv::encoders::Encoders;
use liv::planner::{run_planning_suite, PlannerConfig, PlannerKind, SuiteReward};
use liv::worldgen::TaskSpec;

fn main() -> liv::Result<()> {
    let tasks = TaskSpec::all();
    for kind in [PlannerKind::Mppi, PlannerKind::Cem, PlannerKind::Random] {
        let report = run_planning_suite(&SuiteReward::Oracle, &tasks, &PlannerConfig::for_kind(kind), 5, 0)?;
        println!("oracle reward, {kind:?}: mean {:.2} {:?}", report.mean, report.per_task);
    }
    if let Some(dir) = std::env::args().nth(1) {
        let (enc, _) = Encoders::from_checkpoint(Path::new(&dir))?;
        let report = run_planning_suite(&SuiteReward::Learned(&enc), &tasks, &PlannerConfig::mppi(), 5, 0)?;
        println!("learned reward, Mppi: mean {:.2} {:?}", report.mean, report.per_task);
    }
    Ok(())
}
