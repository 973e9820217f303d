//! Generates a small expert dataset, saves it and loads it back.
//!
//! cargo run --release --example gen_dataset -- /tmp/blockworld 40

use std::path::PathBuf;

use liv::worldgen::{generate_dataset, Dataset, DatasetConfig, PolicyMode};

fn main() -> liv::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "blockworld-data".into()));
    let episodes = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);

    let data = generate_dataset(&DatasetConfig::new(episodes, PolicyMode::Expert, 7))?;
    data.save(&out)?;
    let back = Dataset::load(&out)?;
    assert_eq!(back.fingerprint(), data.fingerprint());

    let frames: usize = data.videos.iter().map(|v| v.frames.len()).sum();
    println!(
        "{} episodes, {} frames, {} labeled, fingerprint {}",
        data.videos.len(),
        frames,
        data.labeled_count(),
        &data.fingerprint()[..16]
    );
    for v in data.videos.iter().take(4) {
        println!("  task {:?}: {} frames, tokens {:?}", v.task_id, v.frames.len(), v.token_ids);
    }

    // Random play almost never finishes a task, so it rarely gets a label.
    let random = generate_dataset(&DatasetConfig::new(episodes, PolicyMode::Random, 7))?;
    println!("random play: {}/{} labeled", random.labeled_count(), episodes);
    Ok(())
}
