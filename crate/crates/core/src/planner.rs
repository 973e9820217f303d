//! Open-loop trajectory optimization (MPPI, CEM) over the true BlockWorld
//! dynamics, scored by a goal-conditioned reward.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::encoders::Encoders;
use crate::error::{Error, Result};
use crate::policy::evaluation_seed;
use crate::reward::{values_against, GoalSpec};
use crate::worldgen::{
    distance, init_episode_with, is_success, render, rng_from_seed, step, Action, Image, Rng,
    TaskSpec, WorldState, MAX_DELTA, SUCCESS_RADIUS,
};

const PLAN_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Mppi,
    Cem,
    /// Executes one sequence drawn from the initial proposal.
    Random,
}

impl std::str::FromStr for PlannerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mppi" => Ok(PlannerKind::Mppi),
            "cem" => Ok(PlannerKind::Cem),
            "random" => Ok(PlannerKind::Random),
            other => Err(Error::InvalidConfig(format!("unknown planner {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub kind: PlannerKind,
    pub horizon: usize,
    pub sequences: usize,
    pub iterations: usize,
    pub lambda: f64,
    pub elite_fraction: f64,
    /// Proposal std of dx and dy.
    pub noise_std: f64,
    /// Proposal std of the grip channel.
    pub grip_noise_std: f64,
    /// Initial mean of the grip channel.
    pub grip_init: f64,
    pub variance_floor: f64,
    pub gamma: f64,
    pub seed: u64,
    pub warm_start: Vec<Action>,
}

impl PlannerConfig {
    pub fn mppi() -> Self {
        PlannerConfig {
            kind: PlannerKind::Mppi,
            horizon: 40,
            sequences: 128,
            iterations: 24,
            lambda: 0.5,
            elite_fraction: 0.1,
            noise_std: 0.02,
            grip_noise_std: 0.1,
            grip_init: 1.0,
            variance_floor: 1e-3,
            gamma: 0.98,
            seed: 0,
            warm_start: Vec::new(),
        }
    }

    pub fn cem() -> Self {
        PlannerConfig {
            kind: PlannerKind::Cem,
            sequences: 200,
            iterations: 1,
            ..PlannerConfig::mppi()
        }
    }

    pub fn random() -> Self {
        PlannerConfig {
            kind: PlannerKind::Random,
            sequences: 1,
            iterations: 0,
            ..PlannerConfig::mppi()
        }
    }

    pub fn for_kind(kind: PlannerKind) -> Self {
        match kind {
            PlannerKind::Mppi => Self::mppi(),
            PlannerKind::Cem => Self::cem(),
            PlannerKind::Random => Self::random(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.horizon == 0 {
            return bad("plan horizon must be ≥ 1");
        }
        if self.kind != PlannerKind::Random && self.sequences < 2 {
            return bad("planners need at least 2 sequences");
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return bad("elite fraction must lie in (0, 1]");
        }
        if !(self.lambda >= 0.0) || !(self.noise_std >= 0.0) || !(self.grip_noise_std >= 0.0) {
            return bad("lambda and noise std must be non-negative");
        }
        if !(self.variance_floor >= 0.0) {
            return bad("variance floor must be non-negative");
        }
        if self.warm_start.len() > self.horizon {
            return bad("warm start longer than the plan horizon");
        }
        Ok(())
    }
}

/// Scores a candidate by its start and end states.
pub trait RolloutScorer: Sync {
    fn score(&self, initial: &WorldState, last: &WorldState, task: &TaskSpec) -> Result<f64> {
        Ok(self.score_batch(initial, std::slice::from_ref(last), task)?[0])
    }

    fn score_batch(&self, initial: &WorldState, last: &[WorldState], task: &TaskSpec) -> Result<Vec<f64>>;
}

/// Learned reward: `V(o_T; goal) − V(o_0; goal)`, the telescoped sum of the
/// potential rewards along the rollout.
pub struct LearnedScorer<'a> {
    pub encoders: &'a Encoders,
    pub goal_embedding: Vec<f64>,
    pub gamma: f64,
}

impl<'a> LearnedScorer<'a> {
    pub fn new(encoders: &'a Encoders, goal: &GoalSpec, gamma: f64) -> Result<Self> {
        Ok(LearnedScorer {
            encoders,
            goal_embedding: goal.embed(encoders)?,
            gamma,
        })
    }
}

impl RolloutScorer for LearnedScorer<'_> {
    fn score_batch(&self, initial: &WorldState, last: &[WorldState], _task: &TaskSpec) -> Result<Vec<f64>> {
        let mut frames: Vec<Image> = Vec::with_capacity(last.len() + 1);
        frames.push(render(initial));
        frames.extend(last.iter().map(render));
        let refs: Vec<&Image> = frames.iter().collect();
        let values = values_against(self.encoders, &refs, &self.goal_embedding, self.gamma)?;
        Ok(values[1..].iter().map(|v| v - values[0]).collect())
    }
}

/// Ground-truth shaped reward, in the same units as the learned one.
pub struct OracleScorer {
    pub gamma: f64,
}

/// Negative block-to-zone distance, minus half the gripper-to-block distance
/// until the block reaches the zone, plus one on success.
pub fn oracle_value(state: &WorldState, task: &TaskSpec) -> f64 {
    let block = state.block_pos[task.block_index()];
    let to_zone = distance(block, task.zone_center());
    let reach = if to_zone < SUCCESS_RADIUS {
        0.0
    } else {
        distance(state.gripper_pos, block)
    };
    let bonus = if is_success(state, task) { 1.0 } else { 0.0 };
    -to_zone - 0.5 * reach + bonus
}

impl RolloutScorer for OracleScorer {
    fn score_batch(&self, initial: &WorldState, last: &[WorldState], task: &TaskSpec) -> Result<Vec<f64>> {
        let v0 = oracle_value(initial, task);
        let unit = 1.0 / (1.0 - self.gamma);
        Ok(last.iter().map(|s| (oracle_value(s, task) - v0) * unit).collect())
    }
}

/// Sum of potential rewards over a frame sequence.
pub fn score_rollout(encoders: &Encoders, frames: &[Image], goal: &GoalSpec, gamma: f64) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::CurveTooShort(frames.len()));
    }
    let g = goal.embed(encoders)?;
    let refs: Vec<&Image> = frames.iter().collect();
    let values = values_against(encoders, &refs, &g, gamma)?;
    Ok(values.windows(2).map(|w| w[1] - w[0]).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    /// Executed (mean) sequence, clamped.
    pub sequence: Vec<Action>,
    /// Candidate scores of the final iteration.
    pub scores: Vec<f64>,
    /// States visited during execution, starting with the initial one.
    pub trajectory: Vec<WorldState>,
    pub success: bool,
}

/// Per-step mean and std over (dx, dy, grip).
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub mean: Vec<[f64; 3]>,
    pub std: Vec<[f64; 3]>,
}

impl Proposal {
    pub fn initial(cfg: &PlannerConfig) -> Self {
        let mut mean = vec![[0.0, 0.0, cfg.grip_init]; cfg.horizon];
        for (m, a) in mean.iter_mut().zip(&cfg.warm_start) {
            *m = a.to_array();
        }
        let std = vec![[cfg.noise_std, cfg.noise_std, cfg.grip_noise_std]; cfg.horizon];
        Proposal { mean, std }
    }

    /// Draws clamped candidate sequences; serial so the noise stream is fixed.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<Vec<[f64; 3]>> {
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        (0..n)
            .map(|_| {
                self.mean
                    .iter()
                    .zip(&self.std)
                    .map(|(m, s)| {
                        let mut a = [0.0; 3];
                        for c in 0..3 {
                            a[c] = m[c] + s[c] * unit.sample(rng);
                        }
                        clamp_action(a)
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn clamp_action(a: [f64; 3]) -> [f64; 3] {
    [
        a[0].clamp(-MAX_DELTA, MAX_DELTA),
        a[1].clamp(-MAX_DELTA, MAX_DELTA),
        a[2].clamp(0.0, 1.0),
    ]
}

fn to_action(a: &[f64; 3]) -> Action {
    Action::new(a[0], a[1], a[2])
}

/// Final state after running `seq` from `initial`.
pub fn simulate(initial: &WorldState, seq: &[[f64; 3]]) -> WorldState {
    seq.iter().fold(initial.clone(), |s, a| step(&s, &to_action(a)))
}

fn score_population<S: RolloutScorer + ?Sized>(
    scorer: &S,
    initial: &WorldState,
    task: &TaskSpec,
    population: &[Vec<[f64; 3]>],
) -> Result<Vec<f64>> {
    let finals: Vec<WorldState> = population.par_iter().map(|seq| simulate(initial, seq)).collect();
    let chunk = 32;
    let scores = finals
        .par_chunks(chunk)
        .map(|c| scorer.score_batch(initial, c, task))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = scores.into_iter().flatten().collect();
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite rollout score {bad}")));
    }
    Ok(scores)
}

/// Normalized MPPI weights `exp((s − max)/λ)`; argmax one-hot when λ < 1e−8.
pub fn mppi_weights(scores: &[f64], lambda: f64) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lambda < 1e-8 {
        let best = scores.iter().position(|&s| s == max).unwrap_or(0);
        return (0..scores.len()).map(|i| if i == best { 1.0 } else { 0.0 }).collect();
    }
    let w: Vec<f64> = scores.iter().map(|s| ((s - max) / lambda).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn weighted_mean(population: &[Vec<[f64; 3]>], weights: &[f64], horizon: usize) -> Vec<[f64; 3]> {
    let mut mean = vec![[0.0; 3]; horizon];
    for (seq, &w) in population.iter().zip(weights) {
        for (m, a) in mean.iter_mut().zip(seq) {
            for c in 0..3 {
                m[c] += w * a[c];
            }
        }
    }
    mean
}

/// Indices of the top `count` scores, ties broken by index.
pub fn elite_indices(scores: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(count.max(1));
    idx
}

fn execute(initial: &WorldState, sequence: &[[f64; 3]], task: &TaskSpec) -> (Vec<Action>, Vec<WorldState>, bool) {
    let mut trajectory = vec![initial.clone()];
    let mut success = is_success(initial, task);
    let mut actions = Vec::with_capacity(sequence.len());
    for a in sequence {
        let action = to_action(&clamp_action(*a));
        let next = step(trajectory.last().expect("nonempty"), &action);
        success |= is_success(&next, task);
        trajectory.push(next);
        actions.push(action);
    }
    (actions, trajectory, success)
}

pub fn mppi_plan<S: RolloutScorer + ?Sized>(
    scorer: &S,
    initial: &WorldState,
    task: &TaskSpec,
    cfg: &PlannerConfig,
) -> Result<PlanResult> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed ^ PLAN_STREAM);
    let mut proposal = Proposal::initial(cfg);
    let mut scores = Vec::new();
    for _ in 0..cfg.iterations {
        let population = proposal.sample(cfg.sequences, &mut rng);
        scores = score_population(scorer, initial, task, &population)?;
        // Equal scores carry no information: keep the mean.
        if scores.iter().all(|&s| s == scores[0]) {
            continue;
        }
        let weights = mppi_weights(&scores, cfg.lambda);
        proposal.mean = weighted_mean(&population, &weights, cfg.horizon);
    }
    let (sequence, trajectory, success) = execute(initial, &proposal.mean, task);
    Ok(PlanResult { sequence, scores, trajectory, success })
}

pub fn cem_plan<S: RolloutScorer + ?Sized>(
    scorer: &S,
    initial: &WorldState,
    task: &TaskSpec,
    cfg: &PlannerConfig,
) -> Result<PlanResult> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed ^ PLAN_STREAM);
    let mut proposal = Proposal::initial(cfg);
    let n_elite = (cfg.elite_fraction * cfg.sequences as f64).ceil() as usize;
    let mut scores = Vec::new();
    for _ in 0..cfg.iterations {
        let population = proposal.sample(cfg.sequences, &mut rng);
        scores = score_population(scorer, initial, task, &population)?;
        let elites = elite_indices(&scores, n_elite);
        let weights: Vec<f64> = (0..population.len())
            .map(|i| if elites.contains(&i) { 1.0 / elites.len() as f64 } else { 0.0 })
            .collect();
        let mean = weighted_mean(&population, &weights, cfg.horizon);
        for (t, m) in mean.iter().enumerate() {
            for c in 0..3 {
                let var = elites
                    .iter()
                    .map(|&i| (population[i][t][c] - m[c]).powi(2))
                    .sum::<f64>()
                    / elites.len() as f64;
                proposal.std[t][c] = var.max(cfg.variance_floor).sqrt();
            }
        }
        proposal.mean = mean;
    }
    let (sequence, trajectory, success) = execute(initial, &proposal.mean, task);
    Ok(PlanResult { sequence, scores, trajectory, success })
}

/// Executes a single sequence drawn from the initial proposal.
pub fn random_plan(initial: &WorldState, task: &TaskSpec, cfg: &PlannerConfig) -> Result<PlanResult> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed ^ PLAN_STREAM);
    let seq = Proposal::initial(cfg).sample(1, &mut rng).remove(0);
    let (sequence, trajectory, success) = execute(initial, &seq, task);
    Ok(PlanResult { sequence, scores: Vec::new(), trajectory, success })
}

pub fn plan<S: RolloutScorer + ?Sized>(
    scorer: &S,
    initial: &WorldState,
    task: &TaskSpec,
    cfg: &PlannerConfig,
) -> Result<PlanResult> {
    match cfg.kind {
        PlannerKind::Mppi => mppi_plan(scorer, initial, task, cfg),
        PlannerKind::Cem => cem_plan(scorer, initial, task, cfg),
        PlannerKind::Random => random_plan(initial, task, cfg),
    }
}

/// Which reward scores candidates in a planning suite.
pub enum SuiteReward<'a> {
    /// Text-goal value of the task annotation.
    Learned(&'a Encoders),
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub planner: PlannerKind,
    pub config: PlannerConfig,
    pub reward: String,
    pub per_task: BTreeMap<usize, f64>,
    pub mean: f64,
}

impl SuiteReport {
    pub fn to_json(&self) -> Value {
        let per_task: serde_json::Map<String, Value> = self
            .per_task
            .iter()
            .map(|(t, r)| (t.to_string(), json!(r)))
            .collect();
        json!({
            "planner": self.planner,
            "config": self.config,
            "reward": self.reward,
            "per_task": per_task,
            "mean": self.mean,
        })
    }
}

/// Plans from `episodes_per_task` seeded initial states per task (the same
/// states the policy evaluation uses for `seed`) and records latched success.
pub fn run_planning_suite(
    reward: &SuiteReward<'_>,
    tasks: &[TaskSpec],
    cfg: &PlannerConfig,
    episodes_per_task: usize,
    seed: u64,
) -> Result<SuiteReport> {
    cfg.validate()?;
    let mut per_task = BTreeMap::new();
    for task in tasks {
        let scorer: Box<dyn RolloutScorer> = match reward {
            SuiteReward::Learned(enc) => Box::new(LearnedScorer::new(
                enc,
                &GoalSpec::Text(task.token_ids.clone()),
                cfg.gamma,
            )?),
            SuiteReward::Oracle => Box::new(OracleScorer { gamma: cfg.gamma }),
        };
        let mut wins = 0usize;
        for ep in 0..episodes_per_task {
            let episode_seed = evaluation_seed(seed, task.task_id, ep);
            let initial = init_episode_with(&mut rng_from_seed(episode_seed), task)?;
            let episode_cfg = PlannerConfig { seed: episode_seed, ..cfg.clone() };
            if plan(scorer.as_ref(), &initial, task, &episode_cfg)?.success {
                wins += 1;
            }
        }
        per_task.insert(task.task_id, wins as f64 / episodes_per_task.max(1) as f64);
    }
    let mean = per_task.values().sum::<f64>() / per_task.len().max(1) as f64;
    Ok(SuiteReport {
        planner: cfg.kind,
        config: cfg.clone(),
        reward: match reward {
            SuiteReward::Learned(_) => "learned_text_goal".into(),
            SuiteReward::Oracle => "oracle".into(),
        },
        per_task,
        mean,
    })
}
