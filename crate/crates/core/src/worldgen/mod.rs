//! BlockWorld: a deterministic 2-D pick-and-place world that renders 32×32 RGB
//! frames, produces text-annotated videos and provides a scripted expert.

mod dataset;
mod expert;
mod io;
mod render;
mod state;
mod task;

pub use dataset::{
    degenerate_video, generate_dataset, AnnotatedVideo, Dataset, DatasetConfig, PolicyMode,
};
pub use expert::expert_action;
pub use render::{render, Image, CHANNELS, FRAME_BYTES, IMAGE_SIDE};
pub use state::{
    distance, init_episode, init_episode_with, is_success, step, Action, WorldState, GRASP_RADIUS,
    MAX_DELTA, RELEASE_RADIUS, START_GRIPPER, SUCCESS_RADIUS,
};
pub use task::{
    tokenize, vocabulary, vocabulary_hash, BlockColor, TaskSpec, ZoneColor, NUM_TASKS, VOCABULARY,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded generator used for every stochastic choice in the crate.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-episode stream: `seed ⊕ episode_index`.
pub fn episode_rng(seed: u64, episode: usize) -> Rng {
    rng_from_seed(seed ^ episode as u64)
}
