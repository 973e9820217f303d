//! Language-conditioned behavior cloning on frozen encoder features and
//! closed-loop evaluation in BlockWorld.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diffnet::{
    adam_step, load_checkpoint, loss_gradient, mlp_forward, mlp_tape, save_checkpoint, AdamConfig,
    OptState, ParamStore, Tensor,
};
use crate::encoders::Encoders;
use crate::error::{Error, Result};
use crate::worldgen::{
    init_episode_with, is_success, render, rng_from_seed, step, Action, Dataset, Image, Rng,
    TaskSpec, WorldState, MAX_DELTA, NUM_TASKS,
};

pub const POLICY_PREFIX: &str = "policy";
/// Per-input standardization (mean, std) fitted on the training inputs.
pub const INPUT_MEAN: &str = "input_norm.mean";
pub const INPUT_STD: &str = "input_norm.std";
const STD_FLOOR: f64 = 1e-6;
pub const ACTION_DIM: usize = 3;
/// Episode length (number of actions) for closed-loop evaluation.
pub const EVAL_HORIZON: usize = 40;
/// Frames encoded per forward pass when precomputing features.
const FEATURE_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskEncoding {
    Language,
    OneHot,
}

impl std::str::FromStr for TaskEncoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "language" => Ok(TaskEncoding::Language),
            "one-hot" | "one_hot" => Ok(TaskEncoding::OneHot),
            other => Err(Error::InvalidConfig(format!("unknown task encoding {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub encoding: TaskEncoding,
    pub hidden: Vec<usize>,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            steps: 5000,
            batch_size: 64,
            lr: 1e-3,
            seed: 0,
            encoding: TaskEncoding::Language,
            hidden: vec![256, 256],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    /// Trainable MLP layers.
    pub params: ParamStore,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub encoding: TaskEncoding,
    pub k: usize,
    pub hidden: Vec<usize>,
}

impl Policy {
    pub fn encoding_width(&self) -> usize {
        match self.encoding {
            TaskEncoding::Language => self.k,
            TaskEncoding::OneHot => NUM_TASKS,
        }
    }

    pub fn input_width(&self) -> usize {
        self.k + self.encoding_width()
    }

    pub fn init(k: usize, encoding: TaskEncoding, hidden: &[usize], seed: u64) -> Result<Policy> {
        let mut policy = Policy {
            params: ParamStore::new(),
            input_mean: Vec::new(),
            input_std: Vec::new(),
            encoding,
            k,
            hidden: hidden.to_vec(),
        };
        let mut dims = vec![policy.input_width()];
        dims.extend(hidden);
        dims.push(ACTION_DIM);
        policy
            .params
            .init_mlp(POLICY_PREFIX, &dims, &mut rng_from_seed(seed))?;
        policy.input_mean = vec![0.0; dims[0]];
        policy.input_std = vec![1.0; dims[0]];
        Ok(policy)
    }

    /// Task-encoding slice of the policy input.
    pub fn task_encoding(&self, encoders: &Encoders, task: &TaskSpec) -> Result<Vec<f64>> {
        TaskSpec::get(task.task_id)?;
        match self.encoding {
            TaskEncoding::Language => encoders.encode_text(&task.token_ids),
            TaskEncoding::OneHot => Ok(one_hot(task.task_id)),
        }
    }

    pub fn raw_output(&self, features: &[f64], task_encoding: &[f64]) -> Result<Vec<f64>> {
        let mut input = Vec::with_capacity(features.len() + task_encoding.len());
        input.extend_from_slice(features);
        input.extend_from_slice(task_encoding);
        if input.len() != self.input_width() {
            return Err(Error::shape(
                "policy input",
                format!("expected width {}, got {}", self.input_width(), input.len()),
            ));
        }
        for (i, x) in input.iter_mut().enumerate() {
            *x = (*x - self.input_mean[i]) / self.input_std[i];
        }
        mlp_forward(&self.params, POLICY_PREFIX, &input)
    }

    /// Fits the standardization to `rows` (one input per row), stored at f32
    /// precision so checkpoints reproduce it exactly.
    fn fit_normalization(&mut self, rows: &Array2<f64>) {
        let n = rows.nrows().max(1) as f64;
        for c in 0..rows.ncols() {
            let col = rows.column(c);
            let mean = col.sum() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            self.input_mean[c] = mean as f32 as f64;
            self.input_std[c] = var.sqrt().max(STD_FLOOR) as f32 as f64;
        }
    }

    fn normalize_rows(&self, rows: &mut Array2<f64>) {
        for mut row in rows.rows_mut() {
            for (c, x) in row.iter_mut().enumerate() {
                *x = (*x - self.input_mean[c]) / self.input_std[c];
            }
        }
    }

    fn full_store(&self) -> Result<ParamStore> {
        let mut store = self.params.clone();
        let w = self.input_mean.len();
        store.insert(INPUT_MEAN, Tensor::from_vec(&[w], self.input_mean.clone())?)?;
        store.insert(INPUT_STD, Tensor::from_vec(&[w], self.input_std.clone())?)?;
        Ok(store)
    }

    pub fn metadata(&self) -> Value {
        json!({
            "policy": {
                "encoding": self.encoding,
                "k": self.k,
                "hidden": self.hidden,
                "input_width": self.input_width(),
                "tasks": TaskSpec::all()
                    .iter()
                    .map(|t| json!({"task_id": t.task_id, "annotation": t.annotation, "token_ids": t.token_ids}))
                    .collect::<Vec<_>>(),
            }
        })
    }

    pub fn save(&self, dir: &Path, extra: Value) -> Result<()> {
        let mut meta = self.metadata();
        if let (Some(obj), Value::Object(more)) = (meta.as_object_mut(), extra) {
            obj.extend(more);
        }
        save_checkpoint(&self.full_store()?, &meta, dir)
    }

    pub fn load(dir: &Path) -> Result<Policy> {
        let (store, meta) = load_checkpoint(dir)?;
        let section = meta
            .get("policy")
            .ok_or_else(|| Error::corrupt(dir, "manifest lacks policy section"))?;
        let parse = |key: &str| {
            section
                .get(key)
                .cloned()
                .ok_or_else(|| Error::corrupt(dir, format!("policy section lacks {key}")))
        };
        let encoding: TaskEncoding = serde_json::from_value(parse("encoding")?)?;
        let k: usize = serde_json::from_value(parse("k")?)?;
        let hidden: Vec<usize> = serde_json::from_value(parse("hidden")?)?;
        let norm = |name: &str| {
            store
                .get(name)
                .map(|t| t.data.clone())
                .ok_or_else(|| Error::corrupt(dir, format!("missing tensor {name}")))
        };
        let policy = Policy {
            params: store.subset(POLICY_PREFIX),
            input_mean: norm(INPUT_MEAN)?,
            input_std: norm(INPUT_STD)?,
            encoding,
            k,
            hidden,
        };
        let fresh = Policy::init(k, encoding, &policy.hidden, 0)?;
        if !fresh.params.same_layout(&policy.params)
            || policy.input_mean.len() != policy.input_width()
            || policy.input_std.len() != policy.input_width()
        {
            return Err(Error::corrupt(dir, "policy tensors do not match recorded architecture"));
        }
        Ok(policy)
    }
}

fn one_hot(task_id: usize) -> Vec<f64> {
    let mut v = vec![0.0; NUM_TASKS];
    v[task_id] = 1.0;
    v
}

/// Vision features for many frames, in fixed-size chunks so the result does
/// not depend on the thread count.
pub fn encode_frames(encoders: &Encoders, frames: &[&Image]) -> Result<Array2<f64>> {
    let chunks = frames
        .par_chunks(FEATURE_CHUNK)
        .map(|c| encoders.encode_images(c))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = chunks.iter().map(|c| c.view()).collect();
    if views.is_empty() {
        return Ok(Array2::zeros((0, encoders.k())));
    }
    Ok(ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths"))
}

#[derive(Debug, Clone)]
pub struct BcRun {
    pub policy: Policy,
    pub losses: Vec<f64>,
    pub examples: usize,
}

/// Fits the policy MLP to recorded actions with MSE; the encoders are only
/// read. Samples `(frame, action, annotation)` uniformly over every timestep
/// of annotated videos that carry actions.
pub fn bc_train(encoders: &Encoders, dataset: &Dataset, config: &BcConfig) -> Result<BcRun> {
    if config.steps == 0 || config.batch_size == 0 {
        return Err(Error::InvalidConfig("bc steps and batch size must be ≥ 1".into()));
    }
    if !dataset.has_actions() {
        return Err(Error::MissingActions);
    }
    let mut frames: Vec<&Image> = Vec::new();
    let mut targets: Vec<[f64; 3]> = Vec::new();
    let mut encodings: Vec<usize> = Vec::new();
    let mut table: Vec<Vec<f64>> = Vec::new();
    let mut cache: HashMap<Vec<usize>, usize> = HashMap::new();
    for video in &dataset.videos {
        let Some(actions) = &video.actions else { continue };
        if !video.is_annotated() {
            continue;
        }
        let slot = match config.encoding {
            TaskEncoding::Language => {
                if let Some(&i) = cache.get(&video.token_ids) {
                    i
                } else {
                    table.push(encoders.encode_text(&video.token_ids)?);
                    cache.insert(video.token_ids.clone(), table.len() - 1);
                    table.len() - 1
                }
            }
            TaskEncoding::OneHot => {
                let Some(task) = video.task_id else { continue };
                let key = vec![usize::MAX, task];
                if let Some(&i) = cache.get(&key) {
                    i
                } else {
                    table.push(one_hot(task));
                    cache.insert(key, table.len() - 1);
                    table.len() - 1
                }
            }
        };
        for (t, a) in actions.iter().enumerate() {
            frames.push(&video.frames[t]);
            targets.push(a.to_array());
            encodings.push(slot);
        }
    }
    if frames.is_empty() {
        return Err(Error::NoAnnotatedVideos);
    }
    let features = encode_frames(encoders, &frames)?;
    let mut policy = Policy::init(encoders.k(), config.encoding, &config.hidden, config.seed)?;
    let width = policy.input_width();
    let mut inputs = Array2::zeros((frames.len(), width));
    for (i, mut row) in inputs.rows_mut().into_iter().enumerate() {
        for (c, v) in features.row(i).iter().chain(table[encodings[i]].iter()).enumerate() {
            row[c] = *v;
        }
    }
    policy.fit_normalization(&inputs);
    policy.normalize_rows(&mut inputs);
    let adam = AdamConfig {
        lr: config.lr,
        weight_decay: 0.0,
        ..AdamConfig::default()
    };
    let mut opt = OptState::new(&policy.params, adam);
    let mut rng = rng_from_seed(config.seed ^ 0xbc);
    let mut losses = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let picks: Vec<usize> = (0..config.batch_size)
            .map(|_| rng.random_range(0..frames.len()))
            .collect();
        let mut input = Array2::zeros((picks.len(), width));
        let mut target = Array2::zeros((picks.len(), ACTION_DIM));
        for (row, &i) in picks.iter().enumerate() {
            input.row_mut(row).assign(&inputs.row(i));
            for c in 0..ACTION_DIM {
                target[[row, c]] = targets[i][c];
            }
        }
        let (loss, grads) = loss_gradient(&policy.params, |tape, p| {
            let x = tape.constant(input.clone());
            let y = tape.constant(target.clone());
            let out = mlp_tape(tape, p, POLICY_PREFIX, x)?;
            let diff = tape.sub(out, y)?;
            let sq = tape.square(diff);
            Ok(tape.mean(sq))
        })?;
        losses.push(loss);
        adam_step(&mut policy.params, &grads, &mut opt)?;
    }
    Ok(BcRun {
        policy,
        losses,
        examples: frames.len(),
    })
}

/// Executable action: displacements clamped, grip thresholded to {0, 1}.
pub fn to_executed(raw: &[f64]) -> Action {
    Action::new(
        raw[0].clamp(-MAX_DELTA, MAX_DELTA),
        raw[1].clamp(-MAX_DELTA, MAX_DELTA),
        if raw[2] >= 0.5 { 1.0 } else { 0.0 },
    )
}

pub fn policy_action(policy: &Policy, encoders: &Encoders, frame: &Image, task: &TaskSpec) -> Result<Action> {
    let features = encoders.encode_image(frame)?;
    let enc = policy.task_encoding(encoders, task)?;
    Ok(to_executed(&policy.raw_output(&features, &enc)?))
}

/// Anything that maps an observation to an action inside an episode.
pub trait Controller: Sync {
    /// Called once per episode; returns per-episode context.
    fn act(&self, state: &WorldState, frame: &Image, task: &TaskSpec, rng: &mut Rng) -> Result<Action>;
}

pub struct LearnedPolicy<'a> {
    pub policy: &'a Policy,
    pub encoders: &'a Encoders,
    task_encodings: Vec<Vec<f64>>,
}

impl<'a> LearnedPolicy<'a> {
    pub fn new(policy: &'a Policy, encoders: &'a Encoders) -> Result<Self> {
        if encoders.k() != policy.k {
            return Err(Error::shape(
                "policy",
                format!("encoder width {} vs policy feature width {}", encoders.k(), policy.k),
            ));
        }
        let task_encodings = TaskSpec::all()
            .iter()
            .map(|t| policy.task_encoding(encoders, t))
            .collect::<Result<_>>()?;
        Ok(LearnedPolicy { policy, encoders, task_encodings })
    }
}

impl Controller for LearnedPolicy<'_> {
    fn act(&self, _state: &WorldState, frame: &Image, task: &TaskSpec, _rng: &mut Rng) -> Result<Action> {
        let enc = self
            .task_encodings
            .get(task.task_id)
            .ok_or(Error::UnknownTask(task.task_id))?;
        let features = self.encoders.encode_image(frame)?;
        Ok(to_executed(&self.policy.raw_output(&features, enc)?))
    }
}

/// The scripted expert, as a rollout oracle.
pub struct ExpertController;

impl Controller for ExpertController {
    fn act(&self, state: &WorldState, _frame: &Image, task: &TaskSpec, rng: &mut Rng) -> Result<Action> {
        Ok(crate::worldgen::expert_action(state, task, rng))
    }
}

/// Uniform random actions.
pub struct RandomController;

impl Controller for RandomController {
    fn act(&self, _state: &WorldState, _frame: &Image, _task: &TaskSpec, rng: &mut Rng) -> Result<Action> {
        Ok(Action::new(
            rng.random_range(-MAX_DELTA..=MAX_DELTA),
            rng.random_range(-MAX_DELTA..=MAX_DELTA),
            rng.random_range(0.0..=1.0),
        ))
    }
}

/// Seed of evaluation episode `episode` of `task_id`.
pub fn evaluation_seed(seed: u64, task_id: usize, episode: usize) -> u64 {
    seed ^ ((task_id as u64) << 32) ^ episode as u64
}

/// Rolls one episode; success is latched once the criterion holds.
pub fn rollout<C: Controller + ?Sized>(controller: &C, task: &TaskSpec, episode_seed: u64, horizon: usize) -> Result<bool> {
    let mut rng = rng_from_seed(episode_seed);
    let mut state = init_episode_with(&mut rng, task)?;
    let mut success = is_success(&state, task);
    for _ in 0..horizon {
        if success {
            break;
        }
        let frame = render(&state);
        let action = controller.act(&state, &frame, task, &mut rng)?;
        state = step(&state, &action);
        success = is_success(&state, task);
    }
    Ok(success)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_task: BTreeMap<usize, f64>,
    pub mean: f64,
}

impl EvalReport {
    pub fn from_rates(per_task: BTreeMap<usize, f64>) -> Self {
        let mean = per_task.values().sum::<f64>() / per_task.len().max(1) as f64;
        EvalReport { per_task, mean }
    }

    /// `{"<task_id>": rate, ..., "mean": m}`
    pub fn to_json(&self) -> Value {
        let mut obj = serde_json::Map::new();
        for (t, r) in &self.per_task {
            obj.insert(t.to_string(), json!(r));
        }
        obj.insert("mean".into(), json!(self.mean));
        Value::Object(obj)
    }
}

pub fn evaluate_controller<C: Controller + ?Sized>(
    controller: &C,
    tasks: &[TaskSpec],
    episodes_per_task: usize,
    seed: u64,
) -> Result<EvalReport> {
    let mut per_task = BTreeMap::new();
    for task in tasks {
        let wins = (0..episodes_per_task)
            .into_par_iter()
            .map(|ep| rollout(controller, task, evaluation_seed(seed, task.task_id, ep), EVAL_HORIZON))
            .collect::<Result<Vec<bool>>>()?;
        let rate = wins.iter().filter(|&&w| w).count() as f64 / episodes_per_task.max(1) as f64;
        per_task.insert(task.task_id, rate);
    }
    Ok(EvalReport::from_rates(per_task))
}

pub fn evaluate_policy(
    policy: &Policy,
    encoders: &Encoders,
    tasks: &[TaskSpec],
    episodes_per_task: usize,
    seed: u64,
) -> Result<EvalReport> {
    let controller = LearnedPolicy::new(policy, encoders)?;
    evaluate_controller(&controller, tasks, episodes_per_task, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderConfig;
    use crate::worldgen::{generate_dataset, DatasetConfig, PolicyMode};

    #[test]
    fn zero_policy_stays_put() {
        let enc = Encoders::init(EncoderConfig::tiny(4), 0).unwrap();
        let mut p = Policy::init(4, TaskEncoding::Language, &[8, 8], 0).unwrap();
        p.params = p.params.zeros_like();
        let task = TaskSpec::get(1).unwrap();
        let a = policy_action(&p, &enc, &Image::black(), &task).unwrap();
        assert_eq!(a, Action::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn execution_clamps_and_thresholds() {
        assert_eq!(to_executed(&[0.5, -0.2, 0.7]), Action::new(0.08, -0.08, 1.0));
        assert_eq!(to_executed(&[0.01, 0.0, 0.49]), Action::new(0.01, 0.0, 0.0));
    }

    #[test]
    fn actions_are_deterministic() {
        let enc = Encoders::init(EncoderConfig::tiny(4), 3).unwrap();
        let p = Policy::init(4, TaskEncoding::OneHot, &[8], 1).unwrap();
        let task = TaskSpec::get(2).unwrap();
        let f = Image::filled([3, 50, 90]);
        assert_eq!(
            policy_action(&p, &enc, &f, &task).unwrap(),
            policy_action(&p, &enc, &f, &task).unwrap()
        );
        assert_eq!(p.input_width(), 8);
    }

    #[test]
    fn overfits_a_single_pair() {
        let mut d = generate_dataset(&DatasetConfig::new(1, PolicyMode::Expert, 0).with_horizon(2)).unwrap();
        d.videos[0].actions = Some(vec![Action::new(0.05, -0.03, 1.0)]);
        let enc = Encoders::init(EncoderConfig::tiny(4), 0).unwrap();
        let cfg = BcConfig { steps: 300, batch_size: 8, hidden: vec![32, 32], ..BcConfig::default() };
        let run = bc_train(&enc, &d, &cfg).unwrap();
        assert!(*run.losses.last().unwrap() < 1e-3, "{:?}", run.losses.last());
    }

    #[test]
    fn encoders_are_frozen_and_zero_lr_is_noop() {
        let d = generate_dataset(&DatasetConfig::new(2, PolicyMode::Expert, 0)).unwrap();
        let enc = Encoders::init(EncoderConfig::tiny(4), 0).unwrap();
        let before = enc.params.clone();
        let cfg = BcConfig { steps: 3, lr: 0.0, hidden: vec![8], seed: 4, ..BcConfig::default() };
        let run = bc_train(&enc, &d, &cfg).unwrap();
        assert_eq!(enc.params, before);
        let fresh = Policy::init(4, TaskEncoding::Language, &[8], 4).unwrap();
        assert_eq!(run.policy.params, fresh.params);
    }

    #[test]
    fn missing_actions_are_rejected() {
        let mut d = generate_dataset(&DatasetConfig::new(2, PolicyMode::Expert, 0)).unwrap();
        d.videos.iter_mut().for_each(|v| v.actions = None);
        let enc = Encoders::init(EncoderConfig::tiny(4), 0).unwrap();
        assert!(matches!(bc_train(&enc, &d, &BcConfig::default()), Err(Error::MissingActions)));
    }

    #[test]
    fn expert_and_random_baselines() {
        let tasks = TaskSpec::all();
        let expert = evaluate_controller(&ExpertController, &tasks, 25, 1).unwrap();
        assert!(expert.mean >= 0.99, "{expert:?}");
        let random = evaluate_controller(&RandomController, &tasks, 25, 1).unwrap();
        assert!(random.mean <= 0.10, "{random:?}");
        assert_eq!(random, evaluate_controller(&RandomController, &tasks, 25, 1).unwrap());
    }

    #[test]
    fn policy_checkpoint_round_trip() {
        let p = Policy::init(6, TaskEncoding::OneHot, &[5], 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        p.save(dir.path(), json!({"note": 1})).unwrap();
        let back = Policy::load(dir.path()).unwrap();
        assert_eq!(back, p);
        let (_, meta) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(meta["policy"]["encoding"], "one_hot");
    }
}
