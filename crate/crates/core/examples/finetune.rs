//! Pre-trains on three tasks, then fine-tunes on the fourth with the same
//! objective and compares text-goal curves on the held-out task.

use liv::encoders::Encoders;
use liv::reward::{cost_curve, curve_metrics, GoalSpec};
use liv::training::{train, Init, TrainConfig};
use liv::worldgen::{generate_dataset, DatasetConfig, PolicyMode};

fn mean_text_spearman(enc: &Encoders, data: &liv::worldgen::Dataset) -> liv::Result<f64> {
    let mut total = 0.0;
    for v in &data.videos {
        let curve = cost_curve(enc, &v.frames, &GoalSpec::Text(v.token_ids.clone()))?;
        total += curve_metrics(&curve)?.spearman;
    }
    Ok(total / data.videos.len() as f64)
}

fn main() -> liv::Result<()> {
    let dir = std::env::temp_dir().join("liv-finetune-example");
    let pre_data = generate_dataset(&DatasetConfig::new(150, PolicyMode::Expert, 0).with_tasks(vec![0, 1, 2]))?;
    let pre = train(&pre_data, &TrainConfig { steps: 400, ..TrainConfig::default() })?;
    pre.save(&dir)?;

    let new_task = generate_dataset(&DatasetConfig::new(50, PolicyMode::Expert, 1).with_tasks(vec![3]))?;
    let held_out = generate_dataset(&DatasetConfig::new(10, PolicyMode::Expert, 2).with_tasks(vec![3]))?;
    let tuned = train(
        &new_task,
        &TrainConfig { steps: 200, init: Init::Checkpoint { path: dir.clone() }, ..TrainConfig::default() },
    )?;
    println!("task 3 text spearman before {:+.3}", mean_text_spearman(&pre.encoders, &held_out)?);
    println!("task 3 text spearman after  {:+.3}", mean_text_spearman(&tuned.encoders, &held_out)?);
    Ok(())
}
