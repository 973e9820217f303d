//! Minibatch training loop shared by pre-training and fine-tuning: sample
//! sub-trajectories, evaluate the objective, differentiate, take an Adam step.

use std::cell::Cell;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diffnet::{adam_step, loss_gradient, save_checkpoint, AdamConfig, OptState, Tape};
use crate::encoders::{EncoderConfig, Encoders};
use crate::error::{Error, Result};
use crate::objectives::{evaluate, objective_tape, sample_batch, LossConfig, LossValues, Objective};
use crate::worldgen::{rng_from_seed, vocabulary_hash, Dataset};

pub const METRICS_HEADER: &str = "step,loss,vip_i,infonce,vip_l,grad_norm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    Fresh,
    Checkpoint { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub eval_every: usize,
    pub loss: LossConfig,
    pub encoder: EncoderConfig,
    pub init: Init,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Liv,
            steps: 2000,
            batch_size: 64,
            lr: 1e-4,
            weight_decay: 1e-3,
            seed: 0,
            eval_every: 50,
            loss: LossConfig::default(),
            encoder: EncoderConfig::default(),
            init: Init::Fresh,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidConfig("steps, batch size and eval_every must be ≥ 1".into()));
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("learning rate and weight decay must be ≥ 0".into()));
        }
        self.loss.validate()?;
        self.encoder.validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub loss: f64,
    pub vip_i: Option<f64>,
    pub infonce: Option<f64>,
    pub vip_l: Option<f64>,
    pub grad_norm: f64,
}

impl MetricsRow {
    fn new(step: usize, v: LossValues, grad_norm: f64) -> Self {
        MetricsRow {
            step,
            loss: v.total,
            vip_i: v.vip_i,
            infonce: v.infonce,
            vip_l: v.vip_l,
            grad_norm,
        }
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.step,
            r.loss,
            opt(r.vip_i),
            opt(r.infonce),
            opt(r.vip_l),
            r.grad_norm
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub encoders: Encoders,
    pub metrics: Vec<MetricsRow>,
    /// Loss of every step, in order (the CSV keeps only every `eval_every`-th).
    pub losses: Vec<f64>,
    pub steps_completed: usize,
    /// Set when a non-finite loss or gradient stopped the run early; the
    /// parameters are then the last finite ones.
    pub aborted: Option<String>,
    pub config: TrainConfig,
    pub dataset_fingerprint: String,
    pub init_metadata: Option<Value>,
}

impl TrainRun {
    pub fn metadata(&self) -> Value {
        let mut meta = self.encoders.metadata();
        let obj = meta.as_object_mut().expect("object");
        obj.insert("gamma".into(), json!(self.config.loss.gamma));
        obj.insert("training".into(), json!(self.config));
        obj.insert("dataset_fingerprint".into(), json!(self.dataset_fingerprint));
        obj.insert("steps_completed".into(), json!(self.steps_completed));
        obj.insert("aborted".into(), json!(self.aborted));
        if let Some(parent) = &self.init_metadata {
            obj.insert(
                "initialized_from".into(),
                json!({
                    "dataset_fingerprint": parent.get("dataset_fingerprint"),
                    "training": parent.get("training"),
                }),
            );
        }
        meta
    }

    /// Mean loss over the last `window` steps.
    pub fn smoothed_final_loss(&self, window: usize) -> f64 {
        let n = self.losses.len();
        let w = window.clamp(1, n.max(1));
        self.losses[n - w..].iter().sum::<f64>() / w as f64
    }

    /// Writes `<dir>/manifest.json`, `<dir>/params.bin` and `<dir>/metrics.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(&self.encoders.params, &self.metadata(), dir)?;
        let path = dir.join("metrics.csv");
        fs::write(&path, metrics_csv(&self.metrics)).map_err(|e| Error::io(&path, e))
    }
}

fn initial_encoders(dataset: &Dataset, config: &TrainConfig) -> Result<(Encoders, Option<Value>)> {
    match &config.init {
        Init::Fresh => Ok((Encoders::init(config.encoder.clone(), config.seed ^ 0x5eed)?, None)),
        Init::Checkpoint { path } => {
            let (enc, meta) = Encoders::from_checkpoint(path)?;
            let expected = meta
                .get("vocabulary_hash")
                .and_then(Value::as_str)
                .unwrap_or("<missing>")
                .to_string();
            let found = vocabulary_hash(&dataset.vocabulary);
            if expected != found {
                return Err(Error::VocabularyMismatch { expected, found });
            }
            Ok((enc, Some(meta)))
        }
    }
}

/// Runs `config.steps` iterations. Serial and deterministic in
/// `(dataset, config)`. Fine-tuning is the same loop with
/// [`Init::Checkpoint`].
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainRun> {
    config.validate()?;
    let (mut encoders, init_metadata) = initial_encoders(dataset, config)?;
    let mut config = config.clone();
    config.encoder = encoders.config.clone();
    if config.objective.needs_text() && dataset.annotated_indices().is_empty() {
        return Err(Error::NoAnnotatedVideos);
    }
    let mut opt = OptState::new(&encoders.params, config.adam());
    let mut rng = rng_from_seed(config.seed);
    let mut run = TrainRun {
        encoders: encoders.clone(),
        metrics: Vec::new(),
        losses: Vec::with_capacity(config.steps),
        steps_completed: 0,
        aborted: None,
        config: config.clone(),
        dataset_fingerprint: dataset.fingerprint(),
        init_metadata,
    };
    for step in 0..config.steps {
        let batch = sample_batch(
            dataset,
            config.batch_size,
            &mut rng,
            &config.loss,
            config.objective.needs_text(),
        )?;
        let values = Cell::new(LossValues::default());
        let result = loss_gradient(&encoders.params, |tape: &mut Tape, p| {
            let terms = objective_tape(tape, p, &encoders.config, &batch, config.objective, &config.loss)?;
            values.set(terms.values(tape));
            Ok(terms.total)
        });
        let values = values.get();
        let grads = match result {
            Ok((_, g)) => g,
            Err(e @ (Error::Numeric(_) | Error::DegenerateEmbedding { .. })) => {
                run.aborted = Some(format!("step {step}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let grad_norm = grads.global_norm();
        run.losses.push(values.total);
        if step % config.eval_every == 0 || step + 1 == config.steps {
            run.metrics.push(MetricsRow::new(step, values, grad_norm));
        }
        let before = encoders.params.clone();
        adam_step(&mut encoders.params, &grads, &mut opt)?;
        if let Some(name) = encoders.params.first_non_finite() {
            run.aborted = Some(format!("step {step}: non-finite parameter {name}"));
            encoders.params = before;
            break;
        }
        run.steps_completed = step + 1;
    }
    run.encoders = encoders;
    Ok(run)
}

/// Mean objective over `batches` fresh batches drawn from `seed`; read-only.
pub fn eval_loss(
    encoders: &Encoders,
    dataset: &Dataset,
    objective: Objective,
    loss: &LossConfig,
    batches: usize,
    batch_size: usize,
    seed: u64,
) -> Result<f64> {
    if batches == 0 {
        return Err(Error::InvalidConfig("need at least one evaluation batch".into()));
    }
    if objective.needs_text() && dataset.annotated_indices().is_empty() {
        return Err(Error::NoAnnotatedVideos);
    }
    let mut rng = rng_from_seed(seed);
    let mut total = 0.0;
    for _ in 0..batches {
        let batch = sample_batch(dataset, batch_size, &mut rng, loss, objective.needs_text())?;
        total += evaluate(encoders, &batch, objective, loss)?.total;
    }
    Ok(total / batches as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::load_checkpoint;
    use crate::worldgen::{generate_dataset, DatasetConfig, PolicyMode};

    fn small_config(objective: Objective) -> TrainConfig {
        TrainConfig {
            objective,
            steps: 6,
            batch_size: 4,
            lr: 1e-3,
            eval_every: 2,
            encoder: EncoderConfig::tiny(8),
            seed: 3,
            ..TrainConfig::default()
        }
    }

    fn data() -> Dataset {
        generate_dataset(&DatasetConfig::new(8, PolicyMode::Expert, 5)).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let d = data();
        let cfg = TrainConfig { steps: 1, lr: 0.0, ..small_config(Objective::Liv) };
        let run = train(&d, &cfg).unwrap();
        let fresh = Encoders::init(cfg.encoder.clone(), cfg.seed ^ 0x5eed).unwrap();
        assert_eq!(run.encoders.params, fresh.params);
    }

    #[test]
    fn runs_are_reproducible() {
        let d = data();
        for obj in Objective::ALL {
            let a = train(&d, &small_config(obj)).unwrap();
            let b = train(&d, &small_config(obj)).unwrap();
            assert_eq!(a.encoders.params, b.encoders.params);
            assert_eq!(metrics_csv(&a.metrics), metrics_csv(&b.metrics));
            assert_eq!(a.metrics.len(), 4);
            assert!(a.metrics.iter().all(|r| r.grad_norm.is_finite()));
        }
    }

    #[test]
    fn csv_leaves_absent_components_empty() {
        let d = data();
        let run = train(&d, &small_config(Objective::VipI)).unwrap();
        let csv = metrics_csv(&run.metrics);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(METRICS_HEADER));
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), 6);
        assert!(fields[2].parse::<f64>().is_ok());
        assert_eq!((fields[3], fields[4]), ("", ""));
    }

    #[test]
    fn finetune_is_train_from_checkpoint() {
        let d = data();
        let pre = train(&d, &small_config(Objective::Liv)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        pre.save(dir.path()).unwrap();
        let (params, _) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(params, pre.encoders.params);
        let cfg = TrainConfig {
            init: Init::Checkpoint { path: dir.path().to_path_buf() },
            lr: 0.0,
            weight_decay: 0.0,
            steps: 1,
            ..small_config(Objective::Liv)
        };
        let ft = train(&d, &cfg).unwrap();
        assert_eq!(ft.encoders.params, pre.encoders.params);
        assert_eq!(ft.metrics.len(), 1);
        assert!(ft.metadata().get("initialized_from").is_some());
    }

    #[test]
    fn vocabulary_mismatch_is_reported() {
        let d = data();
        let pre = train(&d, &small_config(Objective::VipI)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        pre.save(dir.path()).unwrap();
        let mut other = d.clone();
        other.vocabulary.reverse();
        let cfg = TrainConfig {
            init: Init::Checkpoint { path: dir.path().to_path_buf() },
            ..small_config(Objective::VipI)
        };
        assert!(matches!(train(&other, &cfg), Err(Error::VocabularyMismatch { .. })));
    }

    #[test]
    fn text_objective_on_unlabeled_data_fails() {
        let mut d = data();
        d.videos.iter_mut().for_each(|v| v.token_ids.clear());
        assert!(matches!(train(&d, &small_config(Objective::Infonce)), Err(Error::NoAnnotatedVideos)));
        assert!(train(&d, &small_config(Objective::VipI)).is_ok());
    }

    #[test]
    fn eval_is_pure_and_repeatable() {
        let d = data();
        let enc = Encoders::init(EncoderConfig::tiny(8), 0).unwrap();
        let before = enc.clone();
        let a = eval_loss(&enc, &d, Objective::Liv, &LossConfig::default(), 3, 4, 77).unwrap();
        let b = eval_loss(&enc, &d, Objective::Liv, &LossConfig::default(), 3, 4, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(enc, before);
        let (one, _) = d.split_at(1);
        let z = eval_loss(&enc, &one, Objective::Infonce, &LossConfig::default(), 2, 1, 1).unwrap();
        assert_eq!(z, 0.0);
    }
}
