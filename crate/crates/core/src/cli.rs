//! Command-line front end. Every command that writes artifacts also writes a
//! `run_manifest.json` next to them.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::canonical::{to_canonical_string, write_json};
use crate::encoders::{EncoderConfig, Encoders};
use crate::error::{Error, Result};
use crate::objectives::{LossConfig, Objective, OuterScale};
use crate::planner::{run_planning_suite, PlannerConfig, PlannerKind, SuiteReward};
use crate::policy::{bc_train, evaluate_policy, BcConfig, Policy, TaskEncoding};
use crate::reward::{cost_curve, curve_metrics, curves_csv, GoalSpec};
use crate::training::{train, Init, TrainConfig};
use crate::verify::{run_suite, Suite, VerifyOptions};
use crate::worldgen::{
    degenerate_video, generate_dataset, vocabulary_hash, Dataset, DatasetConfig, PolicyMode,
    TaskSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Parser)]
#[command(name = "liv", version, about = "Language-image value learning in a toy pick-and-place world")]
pub struct Cli {
    /// Worker threads; 1 gives the bit-reproducible serial schedule.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a BlockWorld dataset.
    GenData(GenDataArgs),
    /// Train encoders from scratch (or from --init).
    Train(TrainArgs),
    /// Train starting from an existing checkpoint.
    Finetune(TrainArgs),
    /// Cost curves and their quality metrics.
    EvalReward(EvalRewardArgs),
    /// Behavior cloning on frozen encoder features.
    Bc(BcArgs),
    /// Closed-loop evaluation of a cloned policy.
    Rollout(RolloutArgs),
    /// Reward-driven planning suite.
    Plan(PlanArgs),
    /// Property suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyArg {
    Expert,
    Random,
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long)]
    pub episodes: usize,
    #[arg(long, value_enum, default_value = "expert")]
    pub policy: PolicyArg,
    #[arg(long, default_value_t = 40)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Task ids cycled over episodes.
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 2, 3])]
    pub tasks: Vec<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    #[value(name = "liv")]
    Liv,
    #[value(name = "vip-i")]
    VipI,
    #[value(name = "vip-l")]
    VipL,
    #[value(name = "infonce")]
    Infonce,
    #[value(name = "mm-vip")]
    MmVip,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Objective {
        match o {
            ObjectiveArg::Liv => Objective::Liv,
            ObjectiveArg::VipI => Objective::VipI,
            ObjectiveArg::VipL => Objective::VipL,
            ObjectiveArg::Infonce => Objective::Infonce,
            ObjectiveArg::MmVip => Objective::MultimodalVip,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleArg {
    #[value(name = "one")]
    One,
    #[value(name = "one-minus-gamma")]
    OneMinusGamma,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "liv")]
    pub objective: ObjectiveArg,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.98)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub eval_every: usize,
    /// Embedding width for fresh runs.
    #[arg(long, default_value_t = 32)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "one")]
    pub infonce_scale: ScaleArg,
    #[arg(long)]
    pub infonce_symmetric: bool,
    /// Probability that a batch slot is collapsed onto its goal frame.
    #[arg(long, default_value_t = 0.0)]
    pub p_degenerate: f64,
    /// Checkpoint to start from.
    #[arg(long)]
    #[serde(skip)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum GoalArg {
    Image,
    Text,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalRewardArgs {
    #[arg(long)]
    #[serde(skip)]
    pub ckpt: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    /// `all`, ids and inclusive ranges, e.g. `0,3,10-19`.
    #[arg(long, default_value = "all")]
    pub episodes: String,
    #[arg(long, value_enum, default_value = "both")]
    pub goal: GoalArg,
    /// Replace each episode by its last frame repeated.
    #[arg(long)]
    pub degenerate: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingArg {
    #[value(name = "language")]
    Language,
    #[value(name = "one-hot")]
    OneHot,
}

#[derive(Debug, Args, Serialize)]
pub struct BcArgs {
    #[arg(long)]
    #[serde(skip)]
    pub ckpt: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "language")]
    pub encoding: EncodingArg,
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RolloutArgs {
    #[arg(long)]
    #[serde(skip)]
    pub policy: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 25)]
    pub episodes_per_task: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 2, 3])]
    pub tasks: Vec<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerArg {
    Mppi,
    Cem,
    Random,
}

#[derive(Debug, Args, Serialize)]
pub struct PlanArgs {
    /// Reward checkpoint; optional with --oracle-reward.
    #[arg(long)]
    #[serde(skip)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mppi")]
    pub planner: PlannerArg,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub sequences: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub elite_fraction: Option<f64>,
    #[arg(long, default_value_t = 25)]
    pub episodes_per_task: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 2, 3])]
    pub tasks: Vec<usize>,
    /// Score with the ground-truth distance reward instead of a checkpoint.
    #[arg(long)]
    pub oracle_reward: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteArg {
    Prop1,
    Gradcheck,
    Invariants,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub suite: SuiteArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Negative control: perturb the losses so the suite must fail.
    #[arg(long, hide = true)]
    pub corrupt_loss: bool,
    /// Report directory; the report is printed either way.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Provenance record written beside every artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub inputs: Value,
    pub tool_version: String,
    pub seed: u64,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, inputs: Value, seed: u64) -> Result<Self> {
        Ok(RunManifest {
            command: command.into(),
            config: serde_json::from_str(&to_canonical_string(config)?)?,
            inputs,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(RUN_MANIFEST), self)
    }
}

/// SHA-256 over the files of `path` (a file, or a directory walked in
/// sorted order with relative names mixed in). Run manifests are skipped.
pub fn hash_path(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    hash_into(path, path, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

fn hash_into(root: &Path, path: &Path, hasher: &mut Sha256) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
            .collect::<Result<_>>()?;
        entries.sort();
        for entry in entries {
            if entry.file_name().is_some_and(|n| n == RUN_MANIFEST) {
                continue;
            }
            hash_into(root, &entry, hasher)?;
        }
    } else {
        let rel = path.strip_prefix(root).unwrap_or(path);
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        hasher.update(fs::read(path).map_err(|e| Error::io(path, e))?);
    }
    Ok(())
}

/// Parses `all`, `3`, `0,4,7` and `10-19` (inclusive) episode selections.
pub fn parse_episode_spec(spec: &str, available: usize) -> Result<Vec<usize>> {
    if spec.trim() == "all" {
        return Ok((0..available).collect());
    }
    let mut ids = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || Error::InvalidConfig(format!("bad episode selection {part:?}"));
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            ids.extend(a..=b);
        } else {
            ids.push(part.parse().map_err(|_| bad())?);
        }
    }
    if let Some(&id) = ids.iter().find(|&&id| id >= available) {
        return Err(Error::UnknownEpisode(id));
    }
    Ok(ids)
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        // The global pool can only be built once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

fn dispatch(command: &Command) -> Result<i32> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a, "train"),
        Command::Finetune(a) => {
            if a.init.is_none() {
                return Err(Error::InvalidConfig("finetune needs --init <checkpoint>".into()));
            }
            train_cmd(a, "finetune")
        }
        Command::EvalReward(a) => eval_reward(a),
        Command::Bc(a) => bc(a),
        Command::Rollout(a) => rollout(a),
        Command::Plan(a) => plan(a),
        Command::Verify(a) => verify(a),
    }
    .map(|()| EXIT_OK)
    .or_else(|e| match e {
        Error::VerificationFailed => Ok(EXIT_VERIFY),
        other => Err(other),
    })
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let policy = match a.policy {
        PolicyArg::Expert => PolicyMode::Expert,
        PolicyArg::Random => PolicyMode::Random,
    };
    let cfg = DatasetConfig::new(a.episodes, policy, a.seed)
        .with_horizon(a.horizon)
        .with_tasks(a.tasks.clone());
    let data = generate_dataset(&cfg)?;
    data.save(&a.out)?;
    eprintln!(
        "wrote {} episodes ({} labeled) to {}",
        data.videos.len(),
        data.labeled_count(),
        a.out.display()
    );
    RunManifest::new("gen-data", a, json!({}), a.seed)?.write(&a.out)
}

fn train_cmd(a: &TrainArgs, name: &str) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let mut inputs = json!({"data": hash_path(&a.data)?});
    let init = match &a.init {
        Some(path) => {
            inputs["init"] = json!(hash_path(path)?);
            Init::Checkpoint { path: path.clone() }
        }
        None => Init::Fresh,
    };
    let cfg = TrainConfig {
        objective: a.objective.into(),
        steps: a.steps,
        batch_size: a.batch,
        lr: a.lr,
        weight_decay: a.weight_decay,
        seed: a.seed,
        eval_every: a.eval_every,
        loss: LossConfig {
            gamma: a.gamma,
            infonce_outer_scale: match a.infonce_scale {
                ScaleArg::One => OuterScale::One,
                ScaleArg::OneMinusGamma => OuterScale::OneMinusGamma,
            },
            infonce_symmetric: a.infonce_symmetric,
            p_degenerate: a.p_degenerate,
        },
        encoder: EncoderConfig { k: a.k, ..EncoderConfig::default() },
        init,
    };
    let run = train(&data, &cfg)?;
    if let Some(reason) = &run.aborted {
        eprintln!("training stopped early ({reason}); keeping the last finite parameters");
    }
    run.save(&a.out)?;
    eprintln!(
        "{} steps, loss {:.4} -> {:.4}",
        run.steps_completed,
        run.losses.first().copied().unwrap_or(f64::NAN),
        run.smoothed_final_loss(50)
    );
    RunManifest::new(name, a, inputs, a.seed)?.write(&a.out)
}

fn load_encoders_for(ckpt: &Path, data: &Dataset) -> Result<Encoders> {
    let (enc, meta) = Encoders::from_checkpoint(ckpt)?;
    let expected = meta
        .get("vocabulary_hash")
        .and_then(Value::as_str)
        .unwrap_or("<missing>")
        .to_string();
    let found = vocabulary_hash(&data.vocabulary);
    if expected != found {
        return Err(Error::VocabularyMismatch { expected, found });
    }
    Ok(enc)
}

fn eval_reward(a: &EvalRewardArgs) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let enc = load_encoders_for(&a.ckpt, &data)?;
    let ids = parse_episode_spec(&a.episodes, data.videos.len())?;
    let curves_dir = a.out.join("curves");
    fs::create_dir_all(&curves_dir).map_err(|e| Error::io(&curves_dir, e))?;
    let mut rows = Vec::new();
    let (mut sum_img, mut n_img, mut sum_txt, mut n_txt) = (0.0, 0usize, 0.0, 0usize);
    for &id in &ids {
        let video = if a.degenerate {
            degenerate_video(&data.videos[id])
        } else {
            data.videos[id].clone()
        };
        let image = if a.goal != GoalArg::Text {
            Some(cost_curve(&enc, &video.frames, &GoalSpec::Image(video.goal().clone()))?)
        } else {
            None
        };
        let text = if a.goal != GoalArg::Image && video.is_annotated() {
            Some(cost_curve(&enc, &video.frames, &GoalSpec::Text(video.token_ids.clone()))?)
        } else {
            None
        };
        let path = curves_dir.join(format!("ep_{id:06}.csv"));
        fs::write(&path, curves_csv(image.as_ref(), text.as_ref())?).map_err(|e| Error::io(&path, e))?;
        let mi = image.as_ref().map(curve_metrics).transpose()?;
        let mt = text.as_ref().map(curve_metrics).transpose()?;
        if let Some(m) = mi {
            sum_img += m.spearman;
            n_img += 1;
        }
        if let Some(m) = mt {
            sum_txt += m.spearman;
            n_txt += 1;
        }
        rows.push(json!({"episode": id, "image": mi, "text": mt}));
    }
    let mean = |s: f64, n: usize| if n > 0 { json!(s / n as f64) } else { Value::Null };
    let report = json!({
        "episodes": rows,
        "mean_spearman_image": mean(sum_img, n_img),
        "mean_spearman_text": mean(sum_txt, n_txt),
    });
    write_json(&a.out.join("metrics.json"), &report)?;
    println!("{}", to_canonical_string(&json!({
        "mean_spearman_image": report["mean_spearman_image"],
        "mean_spearman_text": report["mean_spearman_text"],
    }))?);
    let inputs = json!({"ckpt": hash_path(&a.ckpt)?, "data": hash_path(&a.data)?});
    RunManifest::new("eval-reward", a, inputs, 0)?.write(&a.out)
}

fn bc(a: &BcArgs) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let enc = load_encoders_for(&a.ckpt, &data)?;
    let cfg = BcConfig {
        steps: a.steps,
        batch_size: a.batch,
        lr: a.lr,
        seed: a.seed,
        encoding: match a.encoding {
            EncodingArg::Language => TaskEncoding::Language,
            EncodingArg::OneHot => TaskEncoding::OneHot,
        },
        ..BcConfig::default()
    };
    let run = bc_train(&enc, &data, &cfg)?;
    let inputs = json!({"ckpt": hash_path(&a.ckpt)?, "data": hash_path(&a.data)?});
    run.policy.save(&a.out, json!({"bc": cfg, "inputs": inputs}))?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in run.losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    let path = a.out.join("bc_losses.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    eprintln!(
        "{} examples, loss {:.5} -> {:.5}",
        run.examples,
        run.losses[0],
        run.losses.last().copied().unwrap_or(f64::NAN)
    );
    RunManifest::new("bc", a, inputs, a.seed)?.write(&a.out)
}

fn tasks_from(ids: &[usize]) -> Result<Vec<TaskSpec>> {
    ids.iter().map(|&t| TaskSpec::get(t)).collect()
}

fn rollout(a: &RolloutArgs) -> Result<()> {
    let policy = Policy::load(&a.policy)?;
    let (enc, _) = Encoders::from_checkpoint(&a.ckpt)?;
    let report = evaluate_policy(&policy, &enc, &tasks_from(&a.tasks)?, a.episodes_per_task, a.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_json(&a.out.join("report.json"), &report.to_json())?;
    println!("{}", to_canonical_string(&report.to_json())?);
    let inputs = json!({"policy": hash_path(&a.policy)?, "ckpt": hash_path(&a.ckpt)?});
    RunManifest::new("rollout", a, inputs, a.seed)?.write(&a.out)
}

fn plan(a: &PlanArgs) -> Result<()> {
    let kind = match a.planner {
        PlannerArg::Mppi => PlannerKind::Mppi,
        PlannerArg::Cem => PlannerKind::Cem,
        PlannerArg::Random => PlannerKind::Random,
    };
    let mut cfg = PlannerConfig { seed: a.seed, ..PlannerConfig::for_kind(kind) };
    if let Some(v) = a.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = a.sequences {
        cfg.sequences = v;
    }
    if let Some(v) = a.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = a.noise_std {
        cfg.noise_std = v;
    }
    if let Some(v) = a.elite_fraction {
        cfg.elite_fraction = v;
    }
    let tasks = tasks_from(&a.tasks)?;
    let mut inputs = json!({});
    let encoders;
    let reward = if a.oracle_reward {
        SuiteReward::Oracle
    } else {
        let ckpt = a
            .ckpt
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("plan needs --ckpt unless --oracle-reward is set".into()))?;
        inputs["ckpt"] = json!(hash_path(ckpt)?);
        encoders = Encoders::from_checkpoint(ckpt)?.0;
        SuiteReward::Learned(&encoders)
    };
    let report = run_planning_suite(&reward, &tasks, &cfg, a.episodes_per_task, a.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_json(&a.out.join("report.json"), &report.to_json())?;
    println!("{}", to_canonical_string(&json!({"per_task": report.to_json()["per_task"], "mean": report.mean}))?);
    RunManifest::new("plan", a, inputs, a.seed)?.write(&a.out)
}

fn verify(a: &VerifyArgs) -> Result<()> {
    let suite = match a.suite {
        SuiteArg::Prop1 => Suite::Prop1,
        SuiteArg::Gradcheck => Suite::Gradcheck,
        SuiteArg::Invariants => Suite::Invariants,
        SuiteArg::All => Suite::All,
    };
    let opts = VerifyOptions { seed: a.seed, corrupt_loss: a.corrupt_loss, ..VerifyOptions::default() };
    let report = run_suite(suite, &opts)?;
    for c in &report.checks {
        eprintln!(
            "{} {:<36} value {:.3e} tol {:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    if let Some(out) = &a.out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_json(&out.join("report.json"), &report)?;
        RunManifest::new("verify", a, json!({}), a.seed)?.write(out)?;
    }
    println!("{}", to_canonical_string(&json!({"suite": report.suite, "passed": report.passed}))?);
    if report.passed {
        Ok(())
    } else {
        Err(Error::VerificationFailed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn episode_specs() {
        assert_eq!(parse_episode_spec("all", 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_episode_spec("0, 2-4", 5).unwrap(), vec![0, 2, 3, 4]);
        assert!(matches!(parse_episode_spec("7", 5), Err(Error::UnknownEpisode(7))));
        assert!(parse_episode_spec("4-2", 5).is_err());
        assert!(parse_episode_spec("x", 5).is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["liv", "gen-data", "--episodes", "2"]), EXIT_USAGE);
        assert_eq!(run(["liv", "plan", "--planner", "beam", "--out", "x"]), EXIT_USAGE);
        assert_eq!(run(["liv", "frobnicate"]), EXIT_USAGE);
    }

    #[test]
    fn manifest_config_omits_paths() {
        let a = GenDataArgs {
            out: "/somewhere".into(),
            episodes: 2,
            policy: PolicyArg::Random,
            horizon: 40,
            seed: 1,
            tasks: vec![0, 1],
        };
        let m = RunManifest::new("gen-data", &a, json!({}), 1).unwrap();
        assert!(m.config.get("out").is_none());
        assert_eq!(m.config["policy"], "random");
    }
}
