use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::worldgen::{Dataset, Image, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterScale {
    One,
    OneMinusGamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub gamma: f64,
    pub infonce_outer_scale: OuterScale,
    pub infonce_symmetric: bool,
    pub p_degenerate: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 0.98,
            infonce_outer_scale: OuterScale::One,
            infonce_symmetric: false,
            p_degenerate: 0.0,
        }
    }
}

impl LossConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        LossConfig {
            gamma,
            ..LossConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!("γ must lie in (0,1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.p_degenerate) {
            return Err(Error::InvalidConfig(format!(
                "p_degenerate must lie in [0,1], got {}",
                self.p_degenerate
            )));
        }
        Ok(())
    }
}

/// Where a batch slot came from: 0-based frame indices into its video.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotSource {
    pub video: usize,
    pub t: usize,
    pub k: usize,
    pub degenerate: bool,
}

/// One minibatch of sub-trajectory tuples `(o_t, o_k, o_{k+1}, g, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub initial: Vec<Image>,
    pub mid: Vec<Image>,
    pub next: Vec<Image>,
    pub goal: Vec<Image>,
    pub text: Vec<Option<Vec<usize>>>,
    pub sources: Vec<SlotSource>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.goal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goal.is_empty()
    }

    /// Token sequences for every slot, or the first slot lacking one.
    pub fn texts(&self) -> Result<Vec<&[usize]>> {
        self.text
            .iter()
            .enumerate()
            .map(|(i, t)| match t {
                Some(ids) if !ids.is_empty() => Ok(ids.as_slice()),
                _ => Err(Error::MissingText(i)),
            })
            .collect()
    }

    /// Slots reordered by `perm` (slot `i` of the result is slot `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> SampledBatch {
        let pick = |v: &Vec<Image>| perm.iter().map(|&i| v[i].clone()).collect();
        SampledBatch {
            initial: pick(&self.initial),
            mid: pick(&self.mid),
            next: pick(&self.next),
            goal: pick(&self.goal),
            text: perm.iter().map(|&i| self.text[i].clone()).collect(),
            sources: perm.iter().map(|&i| self.sources[i]).collect(),
        }
    }

    /// Every slot collapsed to its goal frame.
    pub fn degenerate(&self) -> SampledBatch {
        let mut out = self.clone();
        out.initial = self.goal.clone();
        out.mid = self.goal.clone();
        out.next = self.goal.clone();
        for s in &mut out.sources {
            s.degenerate = true;
        }
        out
    }
}

/// Draws `batch_size` videos uniformly with replacement (annotated ones only
/// when `require_text`), then `t ~ U[0, h−2]`, `k ~ U[t, h−2]`, and the
/// next frame `k+1`. Each slot is replaced by `(g, g, g, g)` with probability
/// `config.p_degenerate`.
pub fn sample_batch(
    dataset: &Dataset,
    batch_size: usize,
    rng: &mut Rng,
    config: &LossConfig,
    require_text: bool,
) -> Result<SampledBatch> {
    config.validate()?;
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be ≥ 1".into()));
    }
    if dataset.videos.is_empty() {
        return Err(Error::InvalidConfig("dataset is empty".into()));
    }
    let pool: Vec<usize> = if require_text {
        dataset.annotated_indices()
    } else {
        (0..dataset.videos.len()).collect()
    };
    if pool.is_empty() {
        return Err(Error::NoAnnotatedVideos);
    }
    let mut batch = SampledBatch {
        initial: Vec::with_capacity(batch_size),
        mid: Vec::with_capacity(batch_size),
        next: Vec::with_capacity(batch_size),
        goal: Vec::with_capacity(batch_size),
        text: Vec::with_capacity(batch_size),
        sources: Vec::with_capacity(batch_size),
    };
    for _ in 0..batch_size {
        let vid = pool[rng.random_range(0..pool.len())];
        let video = &dataset.videos[vid];
        let h = video.horizon();
        let (t, k) = if h >= 2 {
            let t = rng.random_range(0..h - 1);
            (t, rng.random_range(t..h - 1))
        } else {
            (0, 0)
        };
        let degenerate = rng.random::<f64>() < config.p_degenerate || h < 2;
        let goal = video.goal().clone();
        if degenerate {
            batch.initial.push(goal.clone());
            batch.mid.push(goal.clone());
            batch.next.push(goal.clone());
        } else {
            batch.initial.push(video.frames[t].clone());
            batch.mid.push(video.frames[k].clone());
            batch.next.push(video.frames[k + 1].clone());
        }
        batch.goal.push(goal);
        batch
            .text
            .push(video.is_annotated().then(|| video.token_ids.clone()));
        batch.sources.push(SlotSource {
            video: vid,
            t,
            k,
            degenerate,
        });
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::{generate_dataset, rng_from_seed, DatasetConfig, PolicyMode};

    fn data(h: usize) -> Dataset {
        generate_dataset(&DatasetConfig::new(6, PolicyMode::Expert, 1).with_horizon(h)).unwrap()
    }

    #[test]
    fn horizon_two_forces_indices() {
        let d = data(2);
        let b = sample_batch(&d, 8, &mut rng_from_seed(0), &LossConfig::default(), true).unwrap();
        for (i, s) in b.sources.iter().enumerate() {
            assert_eq!((s.t, s.k), (0, 0));
            assert_eq!(b.next[i], b.goal[i]);
        }
    }

    #[test]
    fn indices_stay_in_range() {
        let d = data(40);
        let b = sample_batch(&d, 256, &mut rng_from_seed(3), &LossConfig::default(), false).unwrap();
        for s in &b.sources {
            assert!(s.t <= s.k && s.k <= 38);
        }
    }

    #[test]
    fn full_degeneracy() {
        let d = data(40);
        let cfg = LossConfig { p_degenerate: 1.0, ..LossConfig::default() };
        let b = sample_batch(&d, 16, &mut rng_from_seed(5), &cfg, true).unwrap();
        for i in 0..b.len() {
            assert!(b.initial[i] == b.goal[i] && b.mid[i] == b.goal[i] && b.next[i] == b.goal[i]);
        }
    }

    #[test]
    fn seeded_sampling_repeats() {
        let d = data(40);
        let cfg = LossConfig { p_degenerate: 0.3, ..LossConfig::default() };
        let a = sample_batch(&d, 12, &mut rng_from_seed(9), &cfg, true).unwrap();
        let b = sample_batch(&d, 12, &mut rng_from_seed(9), &cfg, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_requirement_without_annotations_fails() {
        let mut d = data(10);
        for v in &mut d.videos {
            v.token_ids.clear();
        }
        let r = sample_batch(&d, 4, &mut rng_from_seed(0), &LossConfig::default(), true);
        assert!(matches!(r, Err(Error::NoAnnotatedVideos)));
        let b = sample_batch(&d, 4, &mut rng_from_seed(0), &LossConfig::default(), false).unwrap();
        assert!(matches!(b.texts(), Err(Error::MissingText(0))));
    }
}
