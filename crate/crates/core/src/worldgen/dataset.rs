use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::expert::expert_action;
use super::render::{render, Image, CHANNELS, IMAGE_SIDE};
use super::state::{init_episode_with, is_success, step, Action, MAX_DELTA};
use super::task::{tokenize, vocabulary, TaskSpec, NUM_TASKS};
use super::episode_rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    Expert,
    Random,
}

impl std::str::FromStr for PolicyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expert" => Ok(PolicyMode::Expert),
            "random" => Ok(PolicyMode::Random),
            other => Err(Error::InvalidConfig(format!("unknown policy mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub episodes: usize,
    pub policy: PolicyMode,
    pub horizon: usize,
    pub seed: u64,
    /// Task ids cycled over episodes (episode `i` gets `tasks[i % len]`).
    pub tasks: Vec<usize>,
}

impl DatasetConfig {
    pub fn new(episodes: usize, policy: PolicyMode, seed: u64) -> Self {
        DatasetConfig {
            episodes,
            policy,
            horizon: 40,
            seed,
            tasks: (0..NUM_TASKS).collect(),
        }
    }

    pub fn with_tasks(mut self, tasks: Vec<usize>) -> Self {
        self.tasks = tasks;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedVideo {
    pub frames: Vec<Image>,
    pub actions: Option<Vec<Action>>,
    pub token_ids: Vec<usize>,
    pub task_id: Option<usize>,
}

impl AnnotatedVideo {
    pub fn horizon(&self) -> usize {
        self.frames.len()
    }

    pub fn goal(&self) -> &Image {
        self.frames.last().expect("video has at least one frame")
    }

    pub fn is_annotated(&self) -> bool {
        !self.token_ids.is_empty()
    }
}

/// Every frame replaced by the final frame; actions dropped.
pub fn degenerate_video(video: &AnnotatedVideo) -> AnnotatedVideo {
    let goal = video.goal().clone();
    AnnotatedVideo {
        frames: vec![goal; video.horizon()],
        actions: None,
        token_ids: video.token_ids.clone(),
        task_id: video.task_id,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub videos: Vec<AnnotatedVideo>,
    pub vocabulary: Vec<String>,
    pub tasks: Vec<TaskSpec>,
    pub image_dims: [usize; 3],
    pub config: DatasetConfig,
}

impl Dataset {
    pub fn annotated_indices(&self) -> Vec<usize> {
        (0..self.videos.len())
            .filter(|&i| self.videos[i].is_annotated())
            .collect()
    }

    pub fn labeled_count(&self) -> usize {
        self.videos.iter().filter(|v| v.is_annotated()).count()
    }

    pub fn has_actions(&self) -> bool {
        self.videos.iter().any(|v| v.actions.is_some())
    }

    /// SHA-256 over vocabulary, frames, actions and annotations.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.vocabulary {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        for v in &self.videos {
            h.update((v.frames.len() as u64).to_le_bytes());
            for f in &v.frames {
                h.update(f.as_bytes());
            }
            if let Some(actions) = &v.actions {
                for a in actions {
                    for x in a.to_array() {
                        h.update((x as f32).to_le_bytes());
                    }
                }
            }
            h.update((v.token_ids.len() as u64).to_le_bytes());
            for t in &v.token_ids {
                h.update((*t as u64).to_le_bytes());
            }
            h.update(v.task_id.map_or(u64::MAX, |t| t as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Deterministic split: the first `n` videos and the rest.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.videos.len());
        let mut head = self.clone();
        let tail_videos = head.videos.split_off(n);
        let mut tail = self.clone();
        tail.videos = tail_videos;
        (head, tail)
    }

    pub fn retain_tasks(&self, task_ids: &[usize]) -> Dataset {
        let mut out = self.clone();
        out.videos
            .retain(|v| v.task_id.is_some_and(|t| task_ids.contains(&t)));
        out
    }
}

/// Round-trips actions through `f32` so that in-memory datasets equal the
/// ones read back from disk.
fn storage_precision(a: Action) -> Action {
    Action::new(a.dx as f32 as f64, a.dy as f32 as f64, a.grip as f32 as f64)
}

fn run_episode(config: &DatasetConfig, index: usize, tasks: &[TaskSpec]) -> Result<AnnotatedVideo> {
    let task = &tasks[config.tasks[index % config.tasks.len()]];
    let mut rng = episode_rng(config.seed, index);
    let mut state = init_episode_with(&mut rng, task)?;
    let mut frames = Vec::with_capacity(config.horizon);
    let mut actions = Vec::with_capacity(config.horizon.saturating_sub(1));
    frames.push(render(&state));
    for _ in 1..config.horizon {
        let action = match config.policy {
            PolicyMode::Expert => expert_action(&state, task, &mut rng),
            PolicyMode::Random => Action::new(
                rng.random_range(-MAX_DELTA..=MAX_DELTA),
                rng.random_range(-MAX_DELTA..=MAX_DELTA),
                rng.random_range(0.0..=1.0),
            ),
        };
        let action = storage_precision(action);
        state = step(&state, &action);
        actions.push(action);
        frames.push(render(&state));
    }
    let (token_ids, task_id) = match config.policy {
        PolicyMode::Expert => (task.token_ids.clone(), Some(task.task_id)),
        PolicyMode::Random => {
            let achieved: Vec<&str> = tasks
                .iter()
                .filter(|t| is_success(&state, t))
                .map(|t| t.annotation.as_str())
                .collect();
            (tokenize(&achieved.join(" "))?, None)
        }
    };
    Ok(AnnotatedVideo {
        frames,
        actions: Some(actions),
        token_ids,
        task_id,
    })
}

pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset> {
    if config.episodes == 0 {
        return Err(Error::InvalidConfig("episodes must be at least 1".into()));
    }
    if config.horizon < 2 {
        return Err(Error::InvalidConfig("horizon must be at least 2".into()));
    }
    if config.tasks.is_empty() {
        return Err(Error::InvalidConfig("task list is empty".into()));
    }
    for &t in &config.tasks {
        TaskSpec::get(t)?;
    }
    let tasks = TaskSpec::all();
    let videos = (0..config.episodes)
        .map(|i| run_episode(config, i, &tasks))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        videos,
        vocabulary: vocabulary(),
        tasks,
        image_dims: [IMAGE_SIDE, IMAGE_SIDE, CHANNELS],
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expert_dataset_is_deterministic_and_labeled() {
        let cfg = DatasetConfig::new(4, PolicyMode::Expert, 7);
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        for (i, v) in a.videos.iter().enumerate() {
            assert_eq!(v.horizon(), 40);
            assert_eq!(v.actions.as_ref().unwrap().len(), 39);
            assert_eq!(v.token_ids, a.tasks[i % 4].token_ids);
            assert_eq!(v.task_id, Some(i % 4));
        }
        let other = generate_dataset(&DatasetConfig::new(4, PolicyMode::Expert, 8)).unwrap();
        assert_ne!(a.fingerprint(), other.fingerprint());
    }

    #[test]
    fn random_dataset_annotations_are_concatenations() {
        let d = generate_dataset(&DatasetConfig::new(30, PolicyMode::Random, 1)).unwrap();
        for v in &d.videos {
            assert_eq!(v.task_id, None);
            assert_eq!(v.token_ids.len() % 6, 0);
        }
    }

    #[test]
    fn degenerate_video_repeats_goal() {
        let d = generate_dataset(&DatasetConfig::new(1, PolicyMode::Expert, 3)).unwrap();
        let v = &d.videos[0];
        let dv = degenerate_video(v);
        assert_eq!(dv.horizon(), 40);
        assert!(dv.frames.iter().all(|f| f == v.goal()));
        assert_eq!(dv.token_ids, v.token_ids);
        assert_eq!(dv.task_id, v.task_id);
        assert!(dv.actions.is_none());
        assert_eq!(degenerate_video(&dv), dv);

        let single = AnnotatedVideo {
            frames: vec![v.frames[5].clone()],
            actions: None,
            token_ids: vec![0],
            task_id: None,
        };
        assert_eq!(degenerate_video(&single).frames, single.frames);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate_dataset(&DatasetConfig::new(0, PolicyMode::Expert, 0)).is_err());
        let cfg = DatasetConfig::new(1, PolicyMode::Expert, 0).with_tasks(vec![9]);
        assert!(matches!(generate_dataset(&cfg), Err(Error::UnknownTask(9))));
    }
}
