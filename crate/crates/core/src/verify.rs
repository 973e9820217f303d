//! Property suites: the degenerate-batch identity between VIP-L and InfoNCE,
//! finite-difference gradient checks for every objective, and reward,
//! similarity and round-trip invariants.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diffnet::{finite_diff_check, load_checkpoint, save_checkpoint, ParamStore, Tape};
use crate::encoders::{EncoderConfig, Encoders};
use crate::error::{Error, Result};
use crate::objectives::{
    evaluate, infonce_loss, objective_tape, sample_batch, similarity, vip_l_loss, LossConfig,
    Objective, SampledBatch,
};
use crate::reward::{potential_reward, value, GoalSpec};
use crate::worldgen::{
    expert_action, generate_dataset, init_episode_with, render, rng_from_seed, step, Dataset,
    DatasetConfig, Image, PolicyMode, Rng, TaskSpec, FRAME_BYTES, NUM_TASKS,
};

pub const PROP1_TOLERANCE: f64 = 1e-10;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const PROP1_BATCH_SIZES: [usize; 4] = [1, 2, 8, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Prop1,
    Gradcheck,
    Invariants,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prop1" => Ok(Suite::Prop1),
            "gradcheck" => Ok(Suite::Gradcheck),
            "invariants" => Ok(Suite::Invariants),
            "all" => Ok(Suite::All),
            other => Err(Error::InvalidConfig(format!("unknown suite {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Negative control: perturbs the losses under test so checks must fail.
    pub corrupt_loss: bool,
    pub prop1_draws: usize,
    pub gradcheck_draws: usize,
    pub gradcheck_samples: usize,
    pub invariant_cases: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            corrupt_loss: false,
            prop1_draws: 100,
            gradcheck_draws: 20,
            gradcheck_samples: 12,
            invariant_cases: 1000,
        }
    }
}

/// One check: `value` must not exceed `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub margin: f64,
    pub cases: usize,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64, cases: usize) -> Check {
        Check {
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
            margin: tolerance - value,
            cases,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub seed: u64,
    pub corrupt_loss: bool,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn corruption(opts: &VerifyOptions) -> f64 {
    if opts.corrupt_loss {
        1e-3
    } else {
        0.0
    }
}

fn probe_dataset(seed: u64) -> Result<Dataset> {
    generate_dataset(&DatasetConfig::new(8, PolicyMode::Expert, seed))
}

/// Max `|vip_l − (infonce + 1)|` over fully degenerate batches, per batch
/// size, with fresh parameters, batches and γ on every draw.
pub fn prop1_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let data = probe_dataset(opts.seed)?;
    let mut rng = rng_from_seed(opts.seed ^ 0x9101);
    let mut checks = Vec::new();
    for b in PROP1_BATCH_SIZES {
        let mut worst: f64 = 0.0;
        for _ in 0..opts.prop1_draws {
            let enc = Encoders::init(EncoderConfig::default(), rng.random())?;
            let gamma = rng.random_range(0.5..0.999);
            let cfg = LossConfig { gamma, p_degenerate: 1.0, ..LossConfig::default() };
            let batch = sample_batch(&data, b, &mut rng, &cfg, true)?;
            let vl = vip_l_loss(&enc, &batch, gamma)? + corruption(opts);
            let nce = infonce_loss(&enc, &batch, &LossConfig::with_gamma(gamma))?;
            worst = worst.max((vl - (nce + 1.0)).abs());
        }
        checks.push(Check::new(format!("prop1.B{b}"), worst, PROP1_TOLERANCE, opts.prop1_draws));
    }
    Ok(checks)
}

/// Every objective variant checked on `tiny` models.
pub fn gradcheck_variants() -> Vec<(String, Objective, LossConfig)> {
    let one = LossConfig::default();
    let sym = LossConfig { infonce_symmetric: true, ..one };
    let mut v = vec![
        ("vip_i".to_string(), Objective::VipI, one),
        ("vip_l".to_string(), Objective::VipL, one),
        ("infonce".to_string(), Objective::Infonce, one),
        ("infonce_symmetric".to_string(), Objective::Infonce, sym),
        ("liv".to_string(), Objective::Liv, one),
        ("liv_symmetric".to_string(), Objective::Liv, sym),
        ("multimodal_vip".to_string(), Objective::MultimodalVip, one),
    ];
    v.iter_mut().for_each(|(_, _, c)| c.p_degenerate = 0.25);
    v
}

pub fn gradcheck_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let data = probe_dataset(opts.seed)?;
    let mut rng = rng_from_seed(opts.seed ^ 0x96ad);
    let scale = 1.0 + corruption(opts) * 10.0;
    let mut checks = Vec::new();
    for (name, objective, cfg) in gradcheck_variants() {
        let mut worst: f64 = 0.0;
        let (mut done, mut attempts) = (0, 0);
        // Draws whose embedding is exactly zero (every hidden unit dead) sit
        // where cosine is undefined; those are redrawn.
        while done < opts.gradcheck_draws {
            attempts += 1;
            if attempts > 10 * opts.gradcheck_draws.max(1) {
                return Err(Error::InvalidConfig(format!("gradcheck.{name}: too many degenerate draws")));
            }
            let enc = Encoders::init(EncoderConfig::tiny(8), rng.random())?;
            if enc.params.num_scalars() > 5000 {
                return Err(Error::InvalidConfig("gradcheck model exceeds 5k parameters".into()));
            }
            let batch = sample_batch(&data, 6, &mut rng, &cfg, objective.needs_text())?;
            let analytic_params = enc.params.clone();
            let loss = |tape: &mut Tape, p: &ParamStore| {
                let total = objective_tape(tape, p, &enc.config, &batch, objective, &cfg)?.total;
                // The corrupted variant differentiates a rescaled loss
                // everywhere except at the analytic point.
                if scale != 1.0 && p != &analytic_params {
                    Ok(tape.scale(total, scale))
                } else {
                    Ok(total)
                }
            };
            match finite_diff_check(&enc.params, loss, 1e-5, opts.gradcheck_samples, &mut rng) {
                Ok(report) => {
                    worst = worst.max(report.max_rel_error);
                    done += 1;
                }
                Err(Error::DegenerateEmbedding { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        checks.push(Check::new(format!("gradcheck.{name}"), worst, GRADCHECK_TOLERANCE, opts.gradcheck_draws));
    }
    Ok(checks)
}

fn random_frame(rng: &mut Rng) -> Image {
    if rng.random_bool(0.5) {
        let task = TaskSpec::get(rng.random_range(0..NUM_TASKS)).expect("registered");
        let mut s = init_episode_with(rng, &task).expect("placement");
        for _ in 0..rng.random_range(0..30) {
            let a = expert_action(&s, &task, rng);
            s = step(&s, &a);
        }
        render(&s)
    } else {
        Image::from_bytes((0..FRAME_BYTES).map(|_| rng.random()).collect()).expect("frame size")
    }
}

fn random_text(rng: &mut Rng) -> Vec<usize> {
    (0..rng.random_range(1..8)).map(|_| rng.random_range(0..8)).collect()
}

fn random_vec(rng: &mut Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(-3.0..3.0)).collect()
}

/// Reward algebra on `cases` random draws, then loss permutation invariance
/// and bit-exact dataset and checkpoint round trips.
pub fn invariants_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = rng_from_seed(opts.seed ^ 0x1a7a);
    let cases = opts.invariant_cases;
    let encs: Vec<Encoders> = (0..8)
        .map(|i| Encoders::init(EncoderConfig::tiny(8), opts.seed.wrapping_add(i)))
        .collect::<Result<_>>()?;
    let (mut tele, mut self_r, mut self_v, mut bound, mut scale) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..cases {
        let enc = &encs[i % encs.len()];
        let gamma = rng.random_range(0.5..0.999);
        let goal = if rng.random_bool(0.5) {
            GoalSpec::Text(random_text(&mut rng))
        } else {
            GoalSpec::Image(random_frame(&mut rng))
        };
        // Telescoping over a short random trajectory.
        let t = rng.random_range(2..12);
        let frames: Vec<Image> = (0..t).map(|_| random_frame(&mut rng)).collect();
        let mut sum = 0.0;
        for w in frames.windows(2) {
            sum += potential_reward(enc, &w[0], &w[1], &goal, gamma)?;
        }
        let delta = value(enc, &frames[t - 1], &goal, gamma)? - value(enc, &frames[0], &goal, gamma)?;
        tele = tele.max((sum - delta).abs() / (1e-6 * t as f64));
        // Goal-image self consistency.
        let g = random_frame(&mut rng);
        let gs = GoalSpec::Image(g.clone());
        self_r = self_r.max(potential_reward(enc, &g, &g, &gs, gamma)?.abs());
        self_v = self_v.max((value(enc, &g, &gs, gamma)? - 1.0 / (1.0 - gamma)).abs());
        // Similarity bounds and positive-scale invariance.
        let k = rng.random_range(2..40);
        let (a, b) = (random_vec(&mut rng, k), random_vec(&mut rng, k));
        let s = similarity(&a, &b, gamma)?;
        bound = bound.max(s.abs() * (1.0 - gamma) - 1.0);
        let c = rng.random_range(1e-3..1e3);
        let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
        scale = scale.max((similarity(&scaled, &b, gamma)? - s).abs());
    }
    let mut checks = vec![
        Check::new("reward.telescoping_rel_1e-6T", tele, 1.0, cases),
        Check::new("reward.self_reward", self_r, 1e-9, cases),
        Check::new("reward.self_value", self_v, 1e-9, cases),
        Check::new("similarity.bounds_excess", bound.max(0.0), 1e-12, cases),
        Check::new("similarity.scale_invariance", scale, 1e-9, cases),
    ];
    checks.push(permutation_check(opts)?);
    checks.extend(round_trip_checks(opts)?);
    Ok(checks)
}

fn permutation_check(opts: &VerifyOptions) -> Result<Check> {
    let data = probe_dataset(opts.seed)?;
    let mut rng = rng_from_seed(opts.seed ^ 0x7e3);
    let mut worst: f64 = 0.0;
    let draws = 20;
    for _ in 0..draws {
        let enc = Encoders::init(EncoderConfig::tiny(8), rng.random())?;
        let cfg = LossConfig { p_degenerate: 0.2, ..LossConfig::default() };
        let batch: SampledBatch = sample_batch(&data, 8, &mut rng, &cfg, true)?;
        let mut perm: Vec<usize> = (0..batch.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let shuffled = batch.permuted(&perm);
        for obj in Objective::ALL {
            let a = evaluate(&enc, &batch, obj, &cfg)?.total;
            let b = evaluate(&enc, &shuffled, obj, &cfg)?.total;
            worst = worst.max((a - b).abs());
        }
    }
    Ok(Check::new("losses.permutation_invariance", worst, 1e-10, draws))
}

fn round_trip_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let dir = std::env::temp_dir().join(format!("liv-verify-{}-{}", std::process::id(), opts.seed));
    let result = (|| {
        let data = probe_dataset(opts.seed)?;
        data.save(&dir.join("data"))?;
        let back = Dataset::load(&dir.join("data"))?;
        let regenerated = probe_dataset(opts.seed)?;
        let enc = Encoders::init(EncoderConfig::default(), opts.seed)?;
        save_checkpoint(&enc.params, &enc.metadata(), &dir.join("ckpt"))?;
        let (params, _) = load_checkpoint(&dir.join("ckpt"))?;
        let mismatch = |same: bool| if same { 0.0 } else { 1.0 };
        Ok(vec![
            Check::new("roundtrip.dataset", mismatch(back == data), 0.0, 1),
            Check::new("determinism.dataset", mismatch(regenerated == data), 0.0, 1),
            Check::new("roundtrip.checkpoint", mismatch(params == enc.params), 0.0, 1),
        ])
    })();
    let _ = std::fs::remove_dir_all(&dir);
    result
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    if matches!(suite, Suite::Prop1 | Suite::All) {
        checks.extend(prop1_suite(opts)?);
    }
    if matches!(suite, Suite::Gradcheck | Suite::All) {
        checks.extend(gradcheck_suite(opts)?);
    }
    if matches!(suite, Suite::Invariants | Suite::All) {
        checks.extend(invariants_suite(opts)?);
    }
    Ok(VerifyReport {
        suite,
        seed: opts.seed,
        corrupt_loss: opts.corrupt_loss,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> VerifyOptions {
        VerifyOptions {
            prop1_draws: 3,
            gradcheck_draws: 2,
            gradcheck_samples: 6,
            invariant_cases: 30,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn quick_suites_pass() {
        let r = run_suite(Suite::All, &quick()).unwrap();
        assert!(r.passed, "{:#?}", r.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
        assert_eq!(r.checks.iter().filter(|c| c.name.starts_with("prop1")).count(), 4);
    }

    #[test]
    fn corruption_is_detected() {
        let opts = VerifyOptions { corrupt_loss: true, ..quick() };
        assert!(!run_suite(Suite::Prop1, &opts).unwrap().passed);
        assert!(!run_suite(Suite::Gradcheck, &opts).unwrap().passed);
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert!("fuzz".parse::<Suite>().is_err());
    }
}
