//! Training, evaluation and sweep drivers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelKind};
use super::record::{join_losses, mean_se, proportion_se, write_header, EvalRow, RunRow};
use crate::ensemble::{load_checkpoint, save_checkpoint, DynamicsModel, EnsembleModel, TransitionDataset};
use crate::envs::{CoverageGrid, Environment};
use crate::error::{Error, Result};
use crate::planner::{CostBreakdown, Planner};
use crate::rng::{derive_seed, rng_for, SimRng};

// seed streams under the experiment seed
const STREAM_INIT: u64 = 0;
const STREAM_PLAN: u64 = 1;
const STREAM_ENV: u64 = 2;
const STREAM_FIT: u64 = 3;
const STREAM_EVAL_PLAN: u64 = 4;
const STREAM_EVAL_ENV: u64 = 5;

/// Dynamics used by the planner.
pub enum ModelHandle {
    Learned(EnsembleModel),
    GroundTruth(Box<dyn DynamicsModel>),
}

impl ModelHandle {
    pub fn dynamics(&self) -> &dyn DynamicsModel {
        match self {
            ModelHandle::Learned(m) => m,
            ModelHandle::GroundTruth(m) => m.as_ref(),
        }
    }
}

/// Everything one episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub episode_return: f64,
    pub success: bool,
    pub fell: bool,
    pub violations: usize,
    pub steps: usize,
    /// Visited states, starting with the initial one.
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    /// Per-step mean of the executed plan's cost terms.
    pub mean_breakdown: CostBreakdown,
    pub plan_seconds: Vec<f64>,
}

/// Roll out one episode of at most `max_steps` steps with MPC.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    env: &mut dyn Environment,
    reward_env: &dyn Environment,
    model: &dyn DynamicsModel,
    planner: &mut Planner,
    max_steps: usize,
    plan_rng: &mut SimRng,
    env_rng: &mut SimRng,
    log: Option<&Path>,
) -> Result<EpisodeOutcome> {
    let scorer = RewardCost { env: reward_env };
    planner.reset();
    let mut state = env.reset();
    let mut out = EpisodeOutcome {
        episode_return: 0.0,
        success: false,
        fell: false,
        violations: 0,
        steps: 0,
        states: vec![state.clone()],
        actions: Vec::new(),
        mean_breakdown: CostBreakdown::default(),
        plan_seconds: Vec::new(),
    };
    let mut writer = match log {
        Some(p) => {
            let mut w = csv::Writer::from_writer(BufWriter::new(File::create(p)?));
            let mut header = vec!["t".to_string()];
            header.extend((0..env.state_dim()).map(|i| format!("state_{i}")));
            header.extend((0..env.action_dim()).map(|i| format!("action_{i}")));
            header.extend(["reward", "violation", "done"].map(String::from));
            w.write_record(&header)?;
            Some(w)
        }
        None => None,
    };
    let mut sum = CostBreakdown::default();
    for t in 0..max_steps {
        let start = Instant::now();
        let (action, diag) = planner.plan_step(&state, model, &scorer, plan_rng)?;
        out.plan_seconds.push(start.elapsed().as_secs_f64());
        let w = diag.winner;
        sum.task += w.task;
        sum.aleatoric += w.aleatoric;
        sum.epistemic += w.epistemic;
        sum.safety += w.safety;
        sum.total += w.total;
        let tr = env.step(&action, env_rng);
        if let Some(w) = writer.as_mut() {
            let mut rec = vec![t.to_string()];
            rec.extend(state.iter().map(|v| v.to_string()));
            rec.extend(action.iter().map(|v| v.to_string()));
            rec.extend([tr.reward.to_string(), (tr.violation as u8).to_string(), (tr.done as u8).to_string()]);
            w.write_record(&rec)?;
        }
        out.episode_return += tr.reward;
        out.violations += tr.violation as usize;
        out.steps += 1;
        out.actions.push(action);
        out.states.push(tr.next_state.clone());
        state = tr.next_state;
        if tr.done {
            out.success = tr.success;
            out.fell = !tr.success && tr.violation;
            break;
        }
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    let n = out.steps.max(1) as f64;
    out.mean_breakdown = CostBreakdown {
        task: sum.task / n,
        aleatoric: sum.aleatoric / n,
        epistemic: sum.epistemic / n,
        safety: sum.safety / n,
        total: sum.total / n,
    };
    Ok(out)
}

/// Planning cost `-reward`, scored on a separate environment instance.
struct RewardCost<'a> {
    env: &'a dyn Environment,
}

impl crate::planner::CostFunction for RewardCost<'_> {
    fn step_cost(&self, state: &[f64], action: &[f64], next_state: &[f64]) -> f64 {
        -self.env.reward(state, action, next_state)
    }
}

fn build_planner(config: &ExperimentConfig, env: &dyn Environment) -> Result<Planner> {
    let safety = config.safety.setup(env.state_dim(), env.safety_box())?;
    let (low, high) = env.action_bounds();
    Planner::new(config.planner.clone(), low, high, safety)
}

fn build_model(config: &ExperimentConfig, env: &dyn Environment) -> Result<ModelHandle> {
    Ok(match config.model.kind {
        ModelKind::Learned => ModelHandle::Learned(EnsembleModel::new(
            env.state_dim(),
            env.action_dim(),
            &config.model.model_config(),
            derive_seed(config.seed, &[STREAM_INIT]),
        )?),
        ModelKind::GroundTruth => ModelHandle::GroundTruth(config.env.ground_truth(config.model.ensemble_size)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub config_hash: String,
    pub seed: u64,
    pub status: String,
    pub iterations_completed: usize,
    pub dataset_size: usize,
    pub final_coverage: f64,
    pub final_losses: Vec<f64>,
    pub success_rate: f64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Timing {
    plan_steps: usize,
    plan_step_mean_ms: f64,
    plan_step_max_ms: f64,
    total_seconds: f64,
}

impl Timing {
    fn from_samples(samples: &[f64], total: f64) -> Self {
        let n = samples.len();
        Self {
            plan_steps: n,
            plan_step_mean_ms: if n == 0 { 0.0 } else { 1e3 * samples.iter().sum::<f64>() / n as f64 },
            plan_step_max_ms: 1e3 * samples.iter().copied().fold(0.0, f64::max),
            total_seconds: total,
        }
    }
}

/// In-memory copy of `run.csv` plus identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<RunRow>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Refuse to write into a directory that holds outputs of a different
/// config.
pub fn check_replay(out: &Path, config_hash: &str) -> Result<()> {
    let path = out.join("summary.json");
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(&path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("config_hash").and_then(|v| v.as_str()) {
        Some(h) if h != config_hash => Err(Error::invalid(format!(
            "{} holds a run with config hash {h}, but this config hashes to {config_hash}",
            out.display()
        ))),
        _ => Ok(()),
    }
}

/// Alternate data collection and model fitting, writing `run.csv`,
/// `episodes/*.csv`, `model.ckpt`, `summary.json` and `timing.json`
/// under `out`.
pub fn run_training(config: &ExperimentConfig, out: &Path) -> Result<RunRecord> {
    config.validate()?;
    let hash = config.hash();
    fs::create_dir_all(out.join("episodes"))?;
    check_replay(out, &hash)?;
    let started = Instant::now();

    let mut env = config.env.build()?;
    let reward_env = config.env.build()?;
    let mut model = build_model(config, env.as_ref())?;
    let mut planner = build_planner(config, env.as_ref())?;
    let mut dataset = TransitionDataset::new(env.state_dim(), env.action_dim());
    let mut grid = CoverageGrid::new();
    let mut record = RunRecord {
        config_hash: hash.clone(),
        seed: config.seed,
        rows: Vec::new(),
    };
    let run_csv = out.join("run.csv");
    write_header::<RunRow>(&run_csv)?;
    let mut plan_seconds = Vec::new();
    let mut summary = TrainingSummary {
        config_hash: hash.clone(),
        seed: config.seed,
        status: "ok".into(),
        iterations_completed: 0,
        dataset_size: 0,
        final_coverage: 0.0,
        final_losses: Vec::new(),
        success_rate: f64::NAN,
        mean_return: f64::NAN,
    };

    let s = &config.schedule;
    let mut failure = None;
    'outer: for it in 0..s.iterations {
        let mut rows = Vec::with_capacity(s.rollouts_per_iter);
        for ep in 0..s.rollouts_per_iter {
            let path_ids = [it as u64, ep as u64];
            let mut plan_rng = rng_for(config.seed, &[STREAM_PLAN, path_ids[0], path_ids[1]]);
            let mut env_rng = rng_for(config.seed, &[STREAM_ENV, path_ids[0], path_ids[1]]);
            let log = out.join("episodes").join(format!("iter{it:03}_ep{ep:02}.csv"));
            let outcome = match run_episode(env.as_mut(), reward_env.as_ref(), model.dynamics(), &mut planner, s.rollout_length, &mut plan_rng, &mut env_rng, Some(&log)) {
                Ok(o) => o,
                Err(e) => {
                    failure = Some(e);
                    break 'outer;
                }
            };
            plan_seconds.extend_from_slice(&outcome.plan_seconds);
            for st in &outcome.states {
                grid.visit(st[0], st.get(1).copied().unwrap_or(0.0));
            }
            for (t, a) in outcome.actions.iter().enumerate() {
                dataset.push(&outcome.states[t], a, &outcome.states[t + 1])?;
            }
            let b = outcome.mean_breakdown;
            rows.push(RunRow {
                iteration: it,
                episode: ep,
                dataset_size: 0,
                member_losses: String::new(),
                episode_return: outcome.episode_return,
                success: outcome.success,
                violations: outcome.violations,
                steps: outcome.steps,
                coverage: grid.fraction(),
                task_cost: b.task,
                aleatoric_cost: b.aleatoric,
                epistemic_cost: b.epistemic,
                safety_cost: b.safety,
                total_cost: b.total,
                seed: config.seed,
                config_hash: hash.clone(),
            });
        }
        let losses = match &mut model {
            ModelHandle::Learned(m) => match m.fit(&dataset, s.fit_epochs, &config.train, derive_seed(config.seed, &[STREAM_FIT, it as u64])) {
                Ok(report) => report.final_losses(),
                Err(e) => {
                    failure = Some(e);
                    Vec::new()
                }
            },
            ModelHandle::GroundTruth(_) => Vec::new(),
        };
        for r in &mut rows {
            r.dataset_size = dataset.len();
            r.member_losses = join_losses(&losses);
        }
        append_rows(&run_csv, &rows)?;
        record.rows.extend(rows);
        summary.final_losses = losses;
        if failure.is_some() {
            break;
        }
        summary.iterations_completed = it + 1;
    }

    summary.dataset_size = dataset.len();
    summary.final_coverage = grid.fraction();
    if !record.rows.is_empty() {
        let n = record.rows.len();
        summary.success_rate = record.rows.iter().filter(|r| r.success).count() as f64 / n as f64;
        summary.mean_return = record.rows.iter().map(|r| r.episode_return).sum::<f64>() / n as f64;
    }
    if let ModelHandle::Learned(m) = &model {
        save_checkpoint(m, &out.join("model.ckpt"))?;
    }
    if let Some(e) = &failure {
        summary.status = format!("failed: {e}");
    }
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("timing.json"), &Timing::from_samples(&plan_seconds, started.elapsed().as_secs_f64()))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(record),
    }
}

fn append_rows(path: &Path, rows: &[RunRow]) -> Result<()> {
    let file = fs::OpenOptions::new().append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub config_hash: String,
    pub seed: u64,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub success_se: f64,
    pub mean_return: f64,
    pub return_se: f64,
    pub mean_violations: f64,
    pub violations_se: f64,
    pub fall_rate: f64,
    pub fall_se: f64,
}

/// Run `evaluation.episodes` episodes for each of `evaluation.seeds` seeds
/// with a fixed model. A learned model comes from `checkpoint`; ground-truth
/// models ignore it.
pub fn run_eval(config: &ExperimentConfig, checkpoint: Option<&Path>, out: &Path) -> Result<EvalSummary> {
    config.validate()?;
    let hash = config.hash();
    fs::create_dir_all(out.join("episodes"))?;
    let started = Instant::now();
    let mut env = config.env.build()?;
    let reward_env = config.env.build()?;
    let model = match config.model.kind {
        ModelKind::Learned => {
            let path = checkpoint.ok_or_else(|| Error::invalid("a learned model needs a checkpoint to evaluate"))?;
            let m = load_checkpoint(path)?;
            if m.state_dim() != env.state_dim() || m.action_dim() != env.action_dim() {
                return Err(Error::invalid(format!(
                    "checkpoint has state/action dims {}/{}, environment {} needs {}/{}",
                    m.state_dim(),
                    m.action_dim(),
                    env.name(),
                    env.state_dim(),
                    env.action_dim()
                )));
            }
            ModelHandle::Learned(m)
        }
        ModelKind::GroundTruth => build_model(config, env.as_ref())?,
    };
    let mut planner = build_planner(config, env.as_ref())?;
    let per_seed = config.evaluation.episodes;
    let n = per_seed * config.evaluation.seeds;
    let mut rows = Vec::with_capacity(n + 1);
    let mut plan_seconds = Vec::new();
    let (mut rets, mut viols, mut successes, mut falls) = (Vec::new(), Vec::new(), 0, 0);
    for i in 0..n {
        let seed = config.seed.wrapping_add((i / per_seed) as u64);
        let ep = (i % per_seed) as u64;
        let mut plan_rng = rng_for(seed, &[STREAM_EVAL_PLAN, ep]);
        let mut env_rng = rng_for(seed, &[STREAM_EVAL_ENV, ep]);
        let log = out.join("episodes").join(format!("eval_{i:03}.csv"));
        let max_steps = env.episode_length();
        let o = run_episode(env.as_mut(), reward_env.as_ref(), model.dynamics(), &mut planner, max_steps, &mut plan_rng, &mut env_rng, Some(&log))?;
        plan_seconds.extend_from_slice(&o.plan_seconds);
        rets.push(o.episode_return);
        viols.push(o.violations as f64);
        successes += o.success as usize;
        falls += o.fell as usize;
        rows.push(EvalRow {
            episode: i.to_string(),
            episode_return: o.episode_return,
            return_se: None,
            success: o.success as u8 as f64,
            success_se: None,
            violations: o.violations as f64,
            violations_se: None,
            fell: o.fell as u8 as f64,
            fell_se: None,
            steps: o.steps as f64,
            seed,
            config_hash: hash.clone(),
        });
    }
    let (mean_return, return_se) = mean_se(&rets);
    let (mean_violations, violations_se) = mean_se(&viols);
    let (success_rate, success_se) = proportion_se(successes, n);
    let (fall_rate, fall_se) = proportion_se(falls, n);
    let mean_steps = rows.iter().map(|r| r.steps).sum::<f64>() / n as f64;
    rows.push(EvalRow {
        episode: "summary".into(),
        episode_return: mean_return,
        return_se: Some(return_se),
        success: success_rate,
        success_se: Some(success_se),
        violations: mean_violations,
        violations_se: Some(violations_se),
        fell: fall_rate,
        fell_se: Some(fall_se),
        steps: mean_steps,
        seed: config.seed,
        config_hash: hash.clone(),
    });
    let mut w = csv::Writer::from_path(out.join("eval.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let summary = EvalSummary {
        config_hash: hash,
        seed: config.seed,
        episodes: n,
        successes,
        success_rate,
        success_se,
        mean_return,
        return_se,
        mean_violations,
        violations_se,
        fall_rate,
        fall_se,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("timing.json"), &Timing::from_samples(&plan_seconds, started.elapsed().as_secs_f64()))?;
    Ok(summary)
}

/// Outcome of one sweep point.
#[derive(Debug)]
pub struct SweepPoint {
    pub index: usize,
    /// `key=value` settings of this point.
    pub settings: Vec<String>,
    pub dir: PathBuf,
    pub result: Result<RunRecord>,
}

/// Cartesian product of `grid` (key, values) pairs, in row-major order.
pub fn grid_points(grid: &[(String, Vec<String>)]) -> Vec<Vec<String>> {
    let mut points = vec![Vec::new()];
    for (key, values) in grid {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for v in values {
                let mut q = p.clone();
                q.push(format!("{key}={v}"));
                next.push(q);
            }
        }
        points = next;
    }
    points
}

/// Run `run_training` at every grid point with seed `base + index`, each in
/// `out/point_NNN`, and write a combined `out/sweep.csv`. Failing points are
/// recorded and skipped.
pub fn sweep(config: &ExperimentConfig, grid: &[(String, Vec<String>)], out: &Path) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() || grid.iter().any(|(_, v)| v.is_empty()) {
        return Err(Error::Config("sweep grid needs at least one value per key".into()));
    }
    fs::create_dir_all(out)?;
    let keys: Vec<&str> = grid.iter().map(|(k, _)| k.as_str()).collect();
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    let mut header: Vec<String> = vec!["point".into()];
    header.extend(keys.iter().map(|k| k.to_string()));
    header.push("status".into());
    header.extend(run_row_header()?);
    w.write_record(&header)?;

    let mut results = Vec::new();
    for (i, settings) in grid_points(grid).into_iter().enumerate() {
        let mut overrides = settings.clone();
        overrides.push(format!("seed={}", config.seed.wrapping_add(i as u64)));
        let dir = out.join(format!("point_{i:03}"));
        let result = config.with_overrides(&overrides).and_then(|c| run_training(&c, &dir));
        let values: Vec<String> = settings.iter().map(|s| s.split_once('=').map(|x| x.1).unwrap_or("").to_string()).collect();
        let prefix = |status: &str| {
            let mut r = vec![i.to_string()];
            r.extend(values.iter().cloned());
            r.push(status.to_string());
            r
        };
        match &result {
            Ok(rec) => {
                for row in &rec.rows {
                    let mut r = prefix("ok");
                    r.extend(run_row_fields(row)?);
                    w.write_record(&r)?;
                }
            }
            Err(e) => {
                let mut r = prefix(&format!("failed: {e}"));
                r.extend(std::iter::repeat_n(String::new(), header.len() - r.len()));
                w.write_record(&r)?;
            }
        }
        w.flush()?;
        results.push(SweepPoint {
            index: i,
            settings,
            dir,
            result,
        });
    }
    Ok(results)
}

fn run_row_header() -> Result<Vec<String>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(RunRow::default())?;
    let data = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(&data[..]);
    let rec = r.records().next().transpose()?.unwrap_or_default();
    Ok(rec.iter().map(String::from).collect())
}

fn run_row_fields(row: &RunRow) -> Result<Vec<String>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.serialize(row)?;
    let data = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(&data[..]);
    let rec = r.records().next().transpose()?.unwrap_or_default();
    Ok(rec.iter().map(String::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvConfig, IntegratorConfig};
    use crate::harness::record::{read_eval_csv, read_run_csv};

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig {
            seed: 11,
            env: EnvConfig::NoisyIntegrator(IntegratorConfig::default()),
            ..Default::default()
        };
        c.model.ensemble_size = 2;
        c.model.num_layers = 1;
        c.model.hidden_size = 8;
        c.planner.horizon = 4;
        c.planner.num_samples = 12;
        c.planner.particles = 4;
        c.planner.elite_size = 3;
        c.planner.opt_iterations = 2;
        c.schedule.iterations = 2;
        c.schedule.rollouts_per_iter = 2;
        c.schedule.rollout_length = 6;
        c.schedule.fit_epochs = 2;
        c.evaluation.episodes = 3;
        c
    }

    #[test]
    fn training_writes_all_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let rec = run_training(&tiny(), dir.path()).unwrap();
        assert_eq!(rec.rows.len(), 4);
        let rows = read_run_csv(&dir.path().join("run.csv")).unwrap();
        assert_eq!(rows, rec.rows);
        assert_eq!(rows[0].dataset_size, 12);
        assert_eq!(rows[3].dataset_size, 24);
        assert_eq!(rows[3].losses().len(), 2);
        assert!(rows.windows(2).all(|w| w[1].coverage >= w[0].coverage));
        for name in ["model.ckpt", "summary.json", "timing.json", "episodes/iter001_ep01.csv"] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        let ep = std::fs::read_to_string(dir.path().join("episodes/iter000_ep00.csv")).unwrap();
        assert!(ep.starts_with("t,state_0,state_1,state_2,action_0,action_1,reward,violation,done"));
        assert_eq!(ep.lines().count(), 7);
    }

    #[test]
    fn training_is_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = run_training(&tiny(), a.path()).unwrap();
        let rb = run_training(&tiny(), b.path()).unwrap();
        assert_eq!(ra, rb);
        let ca = std::fs::read(a.path().join("model.ckpt")).unwrap();
        let cb = std::fs::read(b.path().join("model.ckpt")).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn zero_iterations_give_a_header_only_log() {
        let mut c = tiny();
        c.schedule.iterations = 0;
        let dir = tempfile::tempdir().unwrap();
        let rec = run_training(&c, dir.path()).unwrap();
        assert!(rec.rows.is_empty());
        let text = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn reusing_a_directory_with_another_config_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny();
        c.schedule.iterations = 0;
        run_training(&c, dir.path()).unwrap();
        run_training(&c, dir.path()).unwrap();
        c.seed += 1;
        assert!(matches!(run_training(&c, dir.path()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn eval_writes_episode_and_summary_rows() {
        let train_dir = tempfile::tempdir().unwrap();
        let c = tiny();
        run_training(&c, train_dir.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        let s = run_eval(&c, Some(&train_dir.path().join("model.ckpt")), out.path()).unwrap();
        let rows = read_eval_csv(&out.path().join("eval.csv")).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[3].episode, "summary");
        assert_eq!(s.episodes, 3);
        assert!(rows[..3].iter().all(|r| r.seed == 11));
        let (p, se) = proportion_se(s.successes, 3);
        assert_eq!((rows[3].success, rows[3].success_se), (p, Some(se)));
        assert!(rows[..3].iter().all(|r| r.success_se.is_none()));
    }

    #[test]
    fn eval_repeats_episodes_per_seed() {
        let mut c = tiny();
        c.model.kind = ModelKind::GroundTruth;
        c.evaluation.episodes = 2;
        c.evaluation.seeds = 3;
        let out = tempfile::tempdir().unwrap();
        let s = run_eval(&c, None, out.path()).unwrap();
        assert_eq!(s.episodes, 6);
        let rows = read_eval_csv(&out.path().join("eval.csv")).unwrap();
        let seeds: Vec<u64> = rows[..6].iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![11, 11, 12, 12, 13, 13]);

        // the first seed's episodes do not depend on how many seeds follow
        c.evaluation.seeds = 1;
        let out1 = tempfile::tempdir().unwrap();
        run_eval(&c, None, out1.path()).unwrap();
        let mut one = read_eval_csv(&out1.path().join("eval.csv")).unwrap();
        for r in &mut one {
            r.config_hash = rows[0].config_hash.clone();
        }
        assert_eq!(one[..2], rows[..2]);
    }

    #[test]
    fn eval_rejects_a_checkpoint_of_the_wrong_shape() {
        let train_dir = tempfile::tempdir().unwrap();
        let c = tiny();
        run_training(&c, train_dir.path()).unwrap();
        let mut other = c.clone();
        other.env = EnvConfig::default();
        let out = tempfile::tempdir().unwrap();
        let err = run_eval(&other, Some(&train_dir.path().join("model.ckpt")), out.path()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn grid_is_a_cartesian_product() {
        let g = vec![("a".to_string(), vec!["1".into(), "2".into()]), ("b".to_string(), vec!["x".into(), "y".into(), "z".into()])];
        let pts = grid_points(&g);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec!["a=1", "b=x"]);
        assert_eq!(pts[5], vec!["a=2", "b=z"]);
    }

    #[test]
    fn sweep_continues_past_failing_points() {
        let mut c = tiny();
        c.schedule.iterations = 1;
        c.schedule.rollouts_per_iter = 1;
        let dir = tempfile::tempdir().unwrap();
        let grid = vec![("planner.elite_size".to_string(), vec!["3".into(), "100".into(), "2".into()])];
        let pts = sweep(&c, &grid, dir.path()).unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts[0].result.is_ok() && pts[1].result.is_err() && pts[2].result.is_ok());
        let seeds: Vec<u64> = [0, 2].iter().map(|&i| pts[i].result.as_ref().unwrap().seed).collect();
        assert_eq!(seeds, vec![11, 13]);
        let mut r = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
        let recs: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(recs.len(), 3);
        assert_eq!(&recs[1][1], "100");
        assert!(recs[1][2].starts_with("failed"));
        assert_eq!(&recs[2][2], "ok");
    }
}
