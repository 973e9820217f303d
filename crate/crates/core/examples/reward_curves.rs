//! Image- and text-goal cost curves for held-out expert episodes.
//!
//! cargo run --release --example reward_curves -- <checkpoint-dir>
//! Without a checkpoint it trains a short run first.

use std::path::Path;

use liv::encoders::Encoders;
use liv::reward::{cost_curve, curve_metrics, GoalSpec};
use liv::training::{train, TrainConfig};
use liv::worldgen::{generate_dataset, DatasetConfig, PolicyMode};

fn main() -> liv::Result<()> {
    let enc = match std::env::args().nth(1) {
        Some(dir) => Encoders::from_checkpoint(Path::new(&dir))?.0,
        None => {
            let data = generate_dataset(&DatasetConfig::new(200, PolicyMode::Expert, 0))?;
            train(&data, &TrainConfig { steps: 300, ..TrainConfig::default() })?.encoders
        }
    };
    let held_out = generate_dataset(&DatasetConfig::new(8, PolicyMode::Expert, 4242))?;
    for (i, v) in held_out.videos.iter().enumerate() {
        let image = cost_curve(&enc, &v.frames, &GoalSpec::Image(v.goal().clone()))?;
        let text = cost_curve(&enc, &v.frames, &GoalSpec::Text(v.token_ids.clone()))?;
        let (mi, mt) = (curve_metrics(&image)?, curve_metrics(&text)?);
        println!(
            "episode {i}: image spearman {:+.3} falling {:.2} | text spearman {:+.3} falling {:.2}",
            mi.spearman, mi.monotone_fraction, mt.spearman, mt.monotone_fraction
        );
    }
    Ok(())
}
