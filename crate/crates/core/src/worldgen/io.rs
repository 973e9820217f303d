//! On-disk dataset layout: `meta.json`, `index.json`, and per-episode
//! `ep_NNNNNN.frames.u8` / `ep_NNNNNN.actions.f32le` blobs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{AnnotatedVideo, Dataset, DatasetConfig, PolicyMode};
use super::render::{Image, FRAME_BYTES};
use super::state::Action;
use super::task::TaskSpec;
use crate::canonical::{read_json, write_json};
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;
const ACTION_DIM: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaskEntry {
    task_id: usize,
    annotation: String,
    token_ids: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    version: u32,
    image_dims: [usize; 3],
    vocabulary: Vec<String>,
    tasks: Vec<TaskEntry>,
    episodes: usize,
    labeled_episodes: usize,
    horizon: usize,
    action_dim: usize,
    seed: u64,
    policy: PolicyMode,
    task_cycle: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    frames_file: String,
    actions_file: Option<String>,
    horizon: usize,
    task_id: Option<usize>,
    token_ids: Vec<usize>,
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

impl Dataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = Meta {
            version: DATASET_FORMAT_VERSION,
            image_dims: self.image_dims,
            vocabulary: self.vocabulary.clone(),
            tasks: self
                .tasks
                .iter()
                .map(|t| TaskEntry {
                    task_id: t.task_id,
                    annotation: t.annotation.clone(),
                    token_ids: t.token_ids.clone(),
                })
                .collect(),
            episodes: self.videos.len(),
            labeled_episodes: self.labeled_count(),
            horizon: self.config.horizon,
            action_dim: ACTION_DIM,
            seed: self.config.seed,
            policy: self.config.policy,
            task_cycle: self.config.tasks.clone(),
        };
        let mut index = Vec::with_capacity(self.videos.len());
        for (i, v) in self.videos.iter().enumerate() {
            let frames_file = format!("ep_{i:06}.frames.u8");
            let mut frames = Vec::with_capacity(v.horizon() * FRAME_BYTES);
            for f in &v.frames {
                frames.extend_from_slice(f.as_bytes());
            }
            write_bytes(&dir.join(&frames_file), &frames)?;
            let actions_file = match &v.actions {
                Some(actions) => {
                    let name = format!("ep_{i:06}.actions.f32le");
                    let mut buf = Vec::with_capacity(actions.len() * ACTION_DIM * 4);
                    for a in actions {
                        for x in a.to_array() {
                            buf.extend_from_slice(&(x as f32).to_le_bytes());
                        }
                    }
                    write_bytes(&dir.join(&name), &buf)?;
                    Some(name)
                }
                None => None,
            };
            index.push(IndexEntry {
                frames_file,
                actions_file,
                horizon: v.horizon(),
                task_id: v.task_id,
                token_ids: v.token_ids.clone(),
            });
        }
        write_json(&dir.join("meta.json"), &meta)?;
        write_json(&dir.join("index.json"), &index)
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let meta_path = dir.join("meta.json");
        let meta: Meta = read_json(&meta_path)?;
        if meta.version != DATASET_FORMAT_VERSION {
            return Err(Error::corrupt(
                &meta_path,
                format!("unsupported version {}", meta.version),
            ));
        }
        if meta.image_dims.iter().product::<usize>() != FRAME_BYTES {
            return Err(Error::corrupt(&meta_path, "unexpected image dims"));
        }
        let index: Vec<IndexEntry> = read_json(&dir.join("index.json"))?;
        if index.len() != meta.episodes {
            return Err(Error::corrupt(&meta_path, "episode count disagrees with index"));
        }
        let vocab_len = meta.vocabulary.len();
        let mut videos = Vec::with_capacity(index.len());
        for entry in index {
            let path = dir.join(&entry.frames_file);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if entry.horizon == 0 || bytes.len() != entry.horizon * FRAME_BYTES {
                return Err(Error::corrupt(
                    &path,
                    format!("expected {} bytes, found {}", entry.horizon * FRAME_BYTES, bytes.len()),
                ));
            }
            let frames = bytes
                .chunks_exact(FRAME_BYTES)
                .map(|c| Image::from_bytes(c.to_vec()))
                .collect::<Result<Vec<_>>>()?;
            let actions = match &entry.actions_file {
                Some(name) => {
                    let path = dir.join(name);
                    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                    let expected = (entry.horizon - 1) * ACTION_DIM * 4;
                    if bytes.len() != expected {
                        return Err(Error::corrupt(
                            &path,
                            format!("expected {expected} bytes, found {}", bytes.len()),
                        ));
                    }
                    let vals: Vec<f64> = bytes
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                        .collect();
                    Some(vals.chunks_exact(ACTION_DIM).map(Action::from_slice).collect())
                }
                None => None,
            };
            if let Some(bad) = entry.token_ids.iter().find(|&&t| t >= vocab_len) {
                return Err(Error::TokenOutOfRange {
                    id: *bad,
                    vocab: vocab_len,
                });
            }
            videos.push(AnnotatedVideo {
                frames,
                actions,
                token_ids: entry.token_ids,
                task_id: entry.task_id,
            });
        }
        let tasks = meta
            .tasks
            .iter()
            .map(|t| {
                let spec = TaskSpec::get(t.task_id)?;
                if spec.annotation != t.annotation {
                    return Err(Error::corrupt(&meta_path, "task table disagrees with registry"));
                }
                Ok(spec)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            videos,
            vocabulary: meta.vocabulary,
            tasks,
            image_dims: meta.image_dims,
            config: DatasetConfig {
                episodes: meta.episodes,
                policy: meta.policy,
                horizon: meta.horizon,
                seed: meta.seed,
                tasks: meta.task_cycle,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::generate_dataset;

    #[test]
    fn round_trip_is_exact() {
        let d = generate_dataset(&DatasetConfig::new(3, PolicyMode::Expert, 11)).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        d.save(tmp.path()).unwrap();
        let back = Dataset::load(tmp.path()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn truncated_frames_are_reported() {
        let d = generate_dataset(&DatasetConfig::new(1, PolicyMode::Expert, 2)).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        d.save(tmp.path()).unwrap();
        let f = tmp.path().join("ep_000000.frames.u8");
        let bytes = fs::read(&f).unwrap();
        fs::write(&f, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(Dataset::load(tmp.path()), Err(Error::Corrupt { .. })));
    }
}
