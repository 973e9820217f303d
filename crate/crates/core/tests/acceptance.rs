//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits non-zero if any failed.
//!
//! cargo test --release -p liv --test acceptance

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use liv::encoders::{EncoderConfig, Encoders};
use liv::planner::{run_planning_suite, PlannerConfig, SuiteReward};
use liv::policy::{bc_train, evaluate_policy, BcConfig};
use liv::reward::{cost_curve, curve_metrics, GoalSpec};
use liv::training::{train, Init, TrainConfig};
use liv::verify::{run_suite, Suite, VerifyOptions};
use liv::worldgen::{generate_dataset, Dataset, DatasetConfig, PolicyMode, TaskSpec};

// Pinned thresholds.
const PROP1_TOL: f64 = 1e-10;
const PROP1_DRAWS: usize = 100;
const PROP1_BUDGET: Duration = Duration::from_secs(60);
const GRAD_TOL: f64 = 1e-4;
const GRAD_DRAWS: usize = 20;
const GRAD_BUDGET: Duration = Duration::from_secs(300);
const INVARIANT_CASES: usize = 1000;
const TELESCOPE_TOL: f64 = 1e-6;
const SELF_TOL: f64 = 1e-9;
const CURVE_IMAGE_MIN: f64 = 0.8;
const CURVE_TEXT_MIN: f64 = 0.7;
const CURVE_BUDGET: Duration = Duration::from_secs(15 * 60);
const BC_MIN: f64 = 0.6;
const BC_MARGIN: f64 = 0.2;
const BC_BUDGET: Duration = Duration::from_secs(20 * 60);
const ORACLE_MIN: f64 = 0.9;
const ORACLE_BUDGET: Duration = Duration::from_secs(10 * 60);
const PLAN_MIN: f64 = 0.4;
const PLAN_MARGIN: f64 = 0.3;
const FINETUNE_SPEARMAN_GAIN: f64 = 0.1;
const CEM_DROP_MAX: f64 = 0.05;

// Protocol sizes.
const TRAIN_EPISODES: usize = 400;
const HELD_OUT_EPISODES: usize = 40;
const TRAIN_STEPS: usize = 2000;
const BC_EPISODES_PER_TASK: usize = 25;
const PLAN_SEEDS: usize = 50;
const FINETUNE_EPISODES: usize = 100;
const FINETUNE_STEPS: usize = TRAIN_STEPS;

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn liv_train(data: &Dataset, init: Init, steps: usize, seed: u64) -> liv::Result<liv::training::TrainRun> {
    train(
        data,
        &TrainConfig {
            steps,
            batch_size: 64,
            seed,
            init,
            encoder: EncoderConfig { k: 32, ..EncoderConfig::default() },
            ..TrainConfig::default()
        },
    )
}

fn mean_spearman(enc: &Encoders, data: &Dataset) -> liv::Result<(f64, f64)> {
    let (mut img, mut txt) = (0.0, 0.0);
    for v in &data.videos {
        img += curve_metrics(&cost_curve(enc, &v.frames, &GoalSpec::Image(v.goal().clone()))?)?.spearman;
        txt += curve_metrics(&cost_curve(enc, &v.frames, &GoalSpec::Text(v.token_ids.clone()))?)?.spearman;
    }
    let n = data.videos.len() as f64;
    Ok((img / n, txt / n))
}

/// Spreads `PLAN_SEEDS` episodes over the given tasks (at least that many in total).
fn per_task(tasks: usize) -> usize {
    PLAN_SEEDS.div_ceil(tasks)
}

fn c1() -> liv::Result<Outcome> {
    let t0 = Instant::now();
    let opts = VerifyOptions { prop1_draws: PROP1_DRAWS, ..VerifyOptions::default() };
    let report = run_suite(Suite::Prop1, &opts)?;
    let worst = report.checks.iter().map(|c| c.value).fold(0.0, f64::max);
    let elapsed = t0.elapsed();
    let batch_sizes = report.checks.len() == 4 && report.checks.iter().all(|c| c.cases >= PROP1_DRAWS);
    Ok(Outcome {
        id: 1,
        name: "prop1 identity",
        passed: worst <= PROP1_TOL && batch_sizes && elapsed < PROP1_BUDGET,
        detail: format!("max |vip_l - infonce - 1| = {worst:.2e} over B in {{1,2,8,64}}, {elapsed:.1?}"),
    })
}

fn c2() -> liv::Result<Outcome> {
    let t0 = Instant::now();
    let opts = VerifyOptions { gradcheck_draws: GRAD_DRAWS, ..VerifyOptions::default() };
    let report = run_suite(Suite::Gradcheck, &opts)?;
    let worst = report.checks.iter().map(|c| c.value).fold(0.0, f64::max);
    let elapsed = t0.elapsed();
    let covered = report.checks.len() >= 7 && report.checks.iter().all(|c| c.cases >= GRAD_DRAWS);
    Ok(Outcome {
        id: 2,
        name: "gradient checks",
        passed: worst <= GRAD_TOL && covered && elapsed < GRAD_BUDGET,
        detail: format!(
            "{} losses, max rel error {worst:.2e}, over tolerance: {:?}, {elapsed:.1?}",
            report.checks.len(),
            report
                .checks
                .iter()
                .filter(|c| c.value > GRAD_TOL)
                .map(|c| format!("{} {:.2e}", c.name, c.value))
                .collect::<Vec<_>>()
        ),
    })
}

fn c3() -> liv::Result<Outcome> {
    let opts = VerifyOptions { invariant_cases: INVARIANT_CASES, ..VerifyOptions::default() };
    let report = run_suite(Suite::Invariants, &opts)?;
    // The suite pins its own tolerances; these re-check the ones named here.
    let pinned = [
        ("reward.telescoping_rel_1e-6T", 1.0),
        ("reward.self_reward", SELF_TOL),
        ("reward.self_value", SELF_TOL),
        ("similarity.bounds_excess", 1e-12),
        ("similarity.scale_invariance", SELF_TOL),
    ];
    let mut failed: Vec<String> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    for (name, tol) in pinned {
        match report.checks.iter().find(|c| c.name == name) {
            Some(c) if c.value <= tol && c.cases >= INVARIANT_CASES => {}
            _ => failed.push(name.to_string()),
        }
    }
    Ok(Outcome {
        id: 3,
        name: "reward algebra",
        passed: failed.is_empty(),
        detail: format!(
            "{} checks over {INVARIANT_CASES} cases, telescoping within {TELESCOPE_TOL:e}*T, failed: {failed:?}",
            report.checks.len()
        ),
    })
}

struct Shared {
    train_data: Dataset,
    pretrained: Encoders,
    pretrained_run: liv::training::TrainRun,
    tuned: Option<Encoders>,
}

fn c4(shared: &mut Option<Shared>) -> liv::Result<Outcome> {
    let t0 = Instant::now();
    let train_data = generate_dataset(&DatasetConfig::new(TRAIN_EPISODES, PolicyMode::Expert, 1))?;
    let held_out = generate_dataset(&DatasetConfig::new(HELD_OUT_EPISODES, PolicyMode::Expert, 2))?;
    let run = liv_train(&train_data, Init::Fresh, TRAIN_STEPS, 0)?;
    let (img, txt) = mean_spearman(&run.encoders, &held_out)?;
    let elapsed = t0.elapsed();
    *shared = Some(Shared { train_data, pretrained: run.encoders.clone(), pretrained_run: run, tuned: None });
    Ok(Outcome {
        id: 4,
        name: "curve quality",
        passed: img >= CURVE_IMAGE_MIN && txt >= CURVE_TEXT_MIN && elapsed <= CURVE_BUDGET,
        detail: format!("spearman image {img:.3} (>= {CURVE_IMAGE_MIN}), text {txt:.3} (>= {CURVE_TEXT_MIN}), {elapsed:.1?}"),
    })
}

fn c5(shared: &Shared) -> liv::Result<Outcome> {
    let t0 = Instant::now();
    let tasks = TaskSpec::all();
    let cfg = BcConfig { seed: 0, ..BcConfig::default() };
    let liv_run = bc_train(&shared.pretrained, &shared.train_data, &cfg)?;
    let liv_eval = evaluate_policy(&liv_run.policy, &shared.pretrained, &tasks, BC_EPISODES_PER_TASK, 99)?;
    let random = Encoders::init(EncoderConfig::default(), 12345)?;
    let rnd_run = bc_train(&random, &shared.train_data, &cfg)?;
    let rnd_eval = evaluate_policy(&rnd_run.policy, &random, &tasks, BC_EPISODES_PER_TASK, 99)?;
    let elapsed = t0.elapsed();
    Ok(Outcome {
        id: 5,
        name: "language-conditioned BC",
        passed: liv_eval.mean >= BC_MIN && liv_eval.mean - rnd_eval.mean >= BC_MARGIN && elapsed <= BC_BUDGET,
        detail: format!(
            "LIV features {:.2} {:?}, random encoder {:.2}, need >= {BC_MIN} and +{BC_MARGIN}, {elapsed:.1?}",
            liv_eval.mean, liv_eval.per_task, rnd_eval.mean
        ),
    })
}

fn c6() -> liv::Result<Outcome> {
    let t0 = Instant::now();
    let tasks = TaskSpec::all();
    let report = run_planning_suite(&SuiteReward::Oracle, &tasks, &PlannerConfig::mppi(), per_task(tasks.len()), 0)?;
    let elapsed = t0.elapsed();
    Ok(Outcome {
        id: 6,
        name: "planner sanity (oracle reward)",
        passed: report.mean >= ORACLE_MIN && elapsed <= ORACLE_BUDGET,
        detail: format!("MPPI success {:.2} {:?} (>= {ORACLE_MIN}), {elapsed:.1?}", report.mean, report.per_task),
    })
}

fn c7(shared: &mut Shared, scratch: &Path) -> liv::Result<Outcome> {
    let ckpt = scratch.join("pretrained");
    shared.pretrained_run.save(&ckpt)?;
    let fresh = generate_dataset(&DatasetConfig::new(FINETUNE_EPISODES, PolicyMode::Expert, 3))?;
    let tuned = liv_train(&fresh, Init::Checkpoint { path: ckpt }, FINETUNE_STEPS, 1)?.encoders;
    let tasks = TaskSpec::all();
    let n = per_task(tasks.len());
    let mppi = run_planning_suite(&SuiteReward::Learned(&tuned), &tasks, &PlannerConfig::mppi(), n, 0)?;
    let random = run_planning_suite(&SuiteReward::Learned(&tuned), &tasks, &PlannerConfig::random(), n, 0)?;
    shared.tuned = Some(tuned);
    Ok(Outcome {
        id: 7,
        name: "learned-reward planning",
        passed: mppi.mean >= PLAN_MIN && mppi.mean - random.mean >= PLAN_MARGIN,
        detail: format!(
            "MPPI {:.2} {:?}, random sequences {:.2}, need >= {PLAN_MIN} and +{PLAN_MARGIN}",
            mppi.mean, mppi.per_task, random.mean
        ),
    })
}

fn c8(scratch: &Path) -> liv::Result<Outcome> {
    let held_task = 3;
    let pre_data = generate_dataset(
        &DatasetConfig::new(TRAIN_EPISODES, PolicyMode::Expert, 11).with_tasks(vec![0, 1, 2]),
    )?;
    let new_task = generate_dataset(
        &DatasetConfig::new(FINETUNE_EPISODES, PolicyMode::Expert, 12).with_tasks(vec![held_task]),
    )?;
    let held_out = generate_dataset(
        &DatasetConfig::new(HELD_OUT_EPISODES, PolicyMode::Expert, 13).with_tasks(vec![held_task]),
    )?;
    let ckpt = scratch.join("three_tasks");
    let pre = liv_train(&pre_data, Init::Fresh, TRAIN_STEPS, 0)?;
    pre.save(&ckpt)?;
    let tuned = liv_train(&new_task, Init::Checkpoint { path: ckpt }, FINETUNE_STEPS, 1)?;
    let (_, before) = mean_spearman(&pre.encoders, &held_out)?;
    let (_, after) = mean_spearman(&tuned.encoders, &held_out)?;
    let tasks = [TaskSpec::get(held_task)?];
    let cfg = PlannerConfig::mppi();
    let plan_before = run_planning_suite(&SuiteReward::Learned(&pre.encoders), &tasks, &cfg, PLAN_SEEDS, 0)?;
    let plan_after = run_planning_suite(&SuiteReward::Learned(&tuned.encoders), &tasks, &cfg, PLAN_SEEDS, 0)?;
    Ok(Outcome {
        id: 8,
        name: "fine-tuning trend",
        passed: after - before >= FINETUNE_SPEARMAN_GAIN && plan_after.mean >= plan_before.mean,
        detail: format!(
            "held-out text spearman {before:.3} -> {after:.3} (gain >= {FINETUNE_SPEARMAN_GAIN}), planning {:.2} -> {:.2}",
            plan_before.mean, plan_after.mean
        ),
    })
}

fn c9(shared: &Shared) -> liv::Result<Outcome> {
    let enc = shared.tuned.as_ref().unwrap_or(&shared.pretrained);
    let tasks = TaskSpec::all();
    let n = per_task(tasks.len());
    let one = run_planning_suite(&SuiteReward::Learned(enc), &tasks, &PlannerConfig::cem(), n, 0)?;
    let three = run_planning_suite(
        &SuiteReward::Learned(enc),
        &tasks,
        &PlannerConfig { iterations: 3, ..PlannerConfig::cem() },
        n,
        0,
    )?;
    Ok(Outcome {
        id: 9,
        name: "planning budget trend",
        passed: three.mean >= one.mean - CEM_DROP_MAX,
        detail: format!("CEM 1 iteration {:.2}, 3 iterations {:.2} (drop <= {CEM_DROP_MAX})", one.mean, three.mean),
    })
}

fn cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_liv"))
        .args(args)
        .output()
        .expect("run liv binary")
        .status
        .code()
        .unwrap_or(-1)
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("read dir") {
            let p = entry.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).expect("read")));
            }
        }
    }
    out.sort();
    out
}

fn pipeline(root: &Path) -> Vec<i32> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    vec![
        cli(&["--threads", "1", "gen-data", "--out", &p("data"), "--episodes", "12", "--seed", "4"]),
        cli(&["--threads", "1", "train", "--data", &p("data"), "--out", &p("ckpt"), "--steps", "30", "--batch", "16", "--eval-every", "10"]),
        cli(&["--threads", "1", "bc", "--ckpt", &p("ckpt"), "--data", &p("data"), "--steps", "30", "--out", &p("policy")]),
        cli(&["--threads", "1", "rollout", "--policy", &p("policy"), "--ckpt", &p("ckpt"), "--episodes-per-task", "2", "--out", &p("rollout")]),
        cli(&["--threads", "1", "plan", "--ckpt", &p("ckpt"), "--episodes-per-task", "1", "--iterations", "2", "--sequences", "16", "--out", &p("plan")]),
    ]
}

fn c10(scratch: &Path) -> liv::Result<Outcome> {
    let (a, b) = (scratch.join("run_a"), scratch.join("run_b"));
    let codes_a = pipeline(&a);
    let codes_b = pipeline(&b);
    let clean = codes_a.iter().chain(&codes_b).all(|&c| c == 0);
    let (fa, fb) = (files(&a), files(&b));
    let identical = clean && !fa.is_empty() && fa == fb;

    let data = Dataset::load(&a.join("data"))?;
    let resaved = scratch.join("data_resaved");
    data.save(&resaved)?;
    let data_exact = files(&a.join("data"))
        .into_iter()
        .filter(|(p, _)| p.to_string_lossy() != "run_manifest.json")
        .eq(files(&resaved));
    let (enc, meta) = Encoders::from_checkpoint(&a.join("ckpt"))?;
    let ck = scratch.join("ckpt_resaved");
    liv::diffnet::save_checkpoint(&enc.params, &meta, &ck)?;
    let ckpt_exact = fs::read(a.join("ckpt/params.bin")).ok() == fs::read(ck.join("params.bin")).ok()
        && fs::read(a.join("ckpt/manifest.json")).ok() == fs::read(ck.join("manifest.json")).ok();
    let negative = cli(&["verify", "--suite", "prop1", "--corrupt-loss"]);
    Ok(Outcome {
        id: 10,
        name: "engineering determinism",
        passed: identical && data_exact && ckpt_exact && negative == 3,
        detail: format!(
            "exit codes {codes_a:?}/{codes_b:?}, {} files identical={identical}, dataset round trip={data_exact}, checkpoint round trip={ckpt_exact}, corrupted verify exit {negative}",
            fa.len()
        ),
    })
}

fn report(outcome: liv::Result<Outcome>, id: usize, name: &'static str, all: &mut Vec<Outcome>) {
    let o = outcome.unwrap_or_else(|e| Outcome { id, name, passed: false, detail: format!("error: {e}") });
    println!("[{}] criterion {:2} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
    all.push(o);
}

fn main() {
    // `cargo test` passes harness flags such as --list or a filter; with
    // --list there is nothing to enumerate.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let scratch = std::env::temp_dir().join(format!("liv-acceptance-{}", std::process::id()));
    let _ = fs::remove_dir_all(&scratch);
    fs::create_dir_all(&scratch).expect("scratch dir");
    let mut all = Vec::new();
    report(c1(), 1, "prop1 identity", &mut all);
    report(c2(), 2, "gradient checks", &mut all);
    report(c3(), 3, "reward algebra", &mut all);
    let mut shared = None;
    report(c4(&mut shared), 4, "curve quality", &mut all);
    match shared.as_mut() {
        Some(s) => {
            report(c5(s), 5, "language-conditioned BC", &mut all);
            report(c6(), 6, "planner sanity (oracle reward)", &mut all);
            report(c7(s, &scratch), 7, "learned-reward planning", &mut all);
        }
        None => {
            for (id, name) in [(5, "language-conditioned BC"), (7, "learned-reward planning")] {
                report(Err(liv::Error::InvalidConfig("criterion 4 produced no checkpoint".into())), id, name, &mut all);
            }
            report(c6(), 6, "planner sanity (oracle reward)", &mut all);
        }
    }
    report(c8(&scratch), 8, "fine-tuning trend", &mut all);
    match shared.as_ref() {
        Some(s) => report(c9(s), 9, "planning budget trend", &mut all),
        None => report(Err(liv::Error::InvalidConfig("no reward checkpoint".into())), 9, "planning budget trend", &mut all),
    }
    report(c10(&scratch), 10, "engineering determinism", &mut all);
    let _ = fs::remove_dir_all(&scratch);

    let passed = all.iter().filter(|o| o.passed).count();
    println!("acceptance: {passed}/{} criteria passed", all.len());
    if passed != all.len() {
        std::process::exit(1);
    }
}
