//! Trains LIV encoders on expert play and writes a checkpoint.
//!
//! cargo run --release --example train_liv -- /tmp/liv-ckpt 500

use std::path::PathBuf;

use liv::objectives::Objective;
use liv::training::{train, TrainConfig};
use liv::worldgen::{generate_dataset, DatasetConfig, PolicyMode};

fn main() -> liv::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "liv-ckpt".into()));
    let steps = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);

    let data = generate_dataset(&DatasetConfig::new(200, PolicyMode::Expert, 0))?;
    let cfg = TrainConfig {
        objective: Objective::Liv,
        steps,
        eval_every: 50,
        ..TrainConfig::default()
    };
    let run = train(&data, &cfg)?;
    for row in &run.metrics {
        println!(
            "step {:5}  loss {:8.4}  vip_i {:8.4}  infonce {:8.4}",
            row.step,
            row.loss,
            row.vip_i.unwrap_or(f64::NAN),
            row.infonce.unwrap_or(f64::NAN)
        );
    }
    run.save(&out)?;
    println!("checkpoint written to {}", out.display());
    Ok(())
}
