//! Language-conditioned behavior cloning on frozen features, compared with
//! the one-hot task encoding and with a random encoder.
//!
//! cargo run --release --example behavior_cloning -- [checkpoint-dir]

use std::path::Path;

use liv::encoders::{EncoderConfig, Encoders};
use liv::policy::{bc_train, evaluate_policy, BcConfig, TaskEncoding};
use liv::worldgen::{generate_dataset, DatasetConfig, PolicyMode, TaskSpec};

fn main() -> liv::Result<()> {
    let trained = match std::env::args().nth(1) {
        Some(dir) => Some(Encoders::from_checkpoint(Path::new(&dir))?.0),
        None => None,
    };
    let random = Encoders::init(EncoderConfig::default(), 99)?;
    let data = generate_dataset(&DatasetConfig::new(100, PolicyMode::Expert, 1))?;

    let mut runs: Vec<(&str, &Encoders, TaskEncoding)> = vec![
        ("random encoder, language", &random, TaskEncoding::Language),
        ("random encoder, one-hot", &random, TaskEncoding::OneHot),
    ];
    if let Some(enc) = &trained {
        runs.push(("trained encoder, language", enc, TaskEncoding::Language));
        runs.push(("trained encoder, one-hot", enc, TaskEncoding::OneHot));
    }
    for (name, enc, encoding) in runs {
        let cfg = BcConfig { steps: 1000, encoding, ..BcConfig::default() };
        let run = bc_train(enc, &data, &cfg)?;
        let report = evaluate_policy(&run.policy, enc, &TaskSpec::all(), 10, 3)?;
        println!(
            "{name:<28} final loss {:.4}  success {:.2} {:?}",
            run.losses.last().copied().unwrap_or(f64::NAN),
            report.mean,
            report.per_task
        );
    }
    Ok(())
}
