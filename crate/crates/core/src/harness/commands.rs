use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use super::manifest::{write_atomic, RunManifest, TrialState, TrialStatus};
use super::{cached_reference, EnvBlock, ExperimentConfig, HarnessError};
use crate::analysis::{
    ablation_returns, aps_map, final_return_score, pod, spectral_filter, transfer_score, AnalysisError, LearningCurve,
    PodResult, ScoreReport,
};
use crate::env::{EnvError, Environment};
use crate::nn::Checkpoint;
use crate::par::{par_map, Execution};
use crate::rng::{derive_seed, seeded};
use crate::sac::{evaluate_deterministic, train, Agent, EpisodeRecord, ReplayBuffer, TrainOptions};
use crate::spectral::env::{D0_EPISODES, D0_SEED_BASE};
use crate::spectral::io::{save_refstates, RefStateRecord};
use crate::spectral::{find_steady_states, reference_state, KsEnv, Trajectory};
use crate::transfer::{build_agent, retention_eval, run_transfer, TransferPlan};

/// Seed stream offsets under a trial's base seed.
const AGENT_STREAM: u64 = 1;
const ENV_STREAM: u64 = 2;
const RETENTION_SEED_BASE: u64 = 0x7E7E_0000;

pub fn trial_dir(run_dir: &Path, trial: usize) -> PathBuf {
    run_dir.join(format!("trial-{trial}"))
}

/// Where `train` and `transfer` put the agent of `trial` at env step `step`.
pub fn checkpoint_path(run_dir: &Path, trial: usize, step: u64) -> PathBuf {
    trial_dir(run_dir, trial).join("ckpt").join(format!("step-{step}.ckpt"))
}

pub fn load_agent(path: &Path) -> Result<Agent, HarnessError> {
    let missing = |reason: String| HarnessError::MissingArtifact { path: path.to_path_buf(), reason };
    if !path.is_file() {
        return Err(missing("no such checkpoint".into()));
    }
    let ck = Checkpoint::load(path).map_err(|e| missing(format!("unreadable checkpoint: {e}")))?;
    Agent::from_checkpoint(ck).map_err(|e| missing(format!("bad agent checkpoint: {e}")))
}

fn ks_env(env: &EnvBlock, cache_dir: &Path, exec: Execution) -> Result<KsEnv, HarnessError> {
    let reference = cached_reference(cache_dir, env, exec)?;
    Ok(KsEnv::new(env.ks(), reference)?)
}

fn rel(run_dir: &Path, path: &Path) -> String {
    path.strip_prefix(run_dir).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    }
    let file = fs::File::create(path).map_err(HarnessError::io(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(HarnessError::io(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let json = serde_json::to_string_pretty(value).expect("serializable");
    write_atomic(path, json.as_bytes())
}

/// Creates the run directory and echoes the resolved config into it.
fn start_run(cfg: &ExperimentConfig, command: &str) -> Result<(RunManifest, Instant), HarnessError> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    let mut m = RunManifest::new(command, cfg);
    m.artifacts.push("config.toml".into());
    Ok((m, Instant::now()))
}

fn finish(mut m: RunManifest, start: Instant, dir: &Path) -> Result<RunManifest, HarnessError> {
    m.wall_clock_s = start.elapsed().as_secs_f64();
    m.write(dir)?;
    let failed: Vec<String> = m
        .trials
        .iter()
        .filter_map(|t| match &t.state {
            TrialState::Failed(why) => Some(format!("trial {}: {why}", t.trial)),
            TrialState::Ok => None,
        })
        .collect();
    if failed.is_empty() {
        Ok(m)
    } else {
        Err(HarnessError::BlowUp(failed.join("; ")))
    }
}

struct TrialJob {
    trial: usize,
    seed: u64,
    slot: Mutex<Option<(Agent, Option<ReplayBuffer>)>>,
}

struct TrialResult {
    status: TrialStatus,
    episodes: Vec<EpisodeRecord>,
    artifacts: Vec<String>,
    agent: Agent,
}

/// Trains every prepared agent on its own environment stream. Trials fail
/// independently; a blown-up trial keeps its curve up to the failure.
fn run_trials(
    cfg: &ExperimentConfig,
    env: &KsEnv,
    jobs: Vec<TrialJob>,
    plan: Option<&[TransferPlan]>,
    exec: Execution,
) -> Result<(Vec<TrialResult>, LearningCurve), HarnessError> {
    let out = &cfg.output_dir;
    let results = par_map(exec, &jobs, |job| -> Result<TrialResult, HarnessError> {
        let (mut agent, buffer) = job.slot.lock().expect("trial slot").take().expect("each trial runs once");
        let mut env = env.clone();
        let dir = trial_dir(out, job.trial);
        fs::create_dir_all(dir.join("ckpt")).map_err(HarnessError::io(&dir))?;
        let opts = TrainOptions {
            total_steps: cfg.run.total_steps,
            env_seed: derive_seed(job.seed, ENV_STREAM),
            checkpoint_every: cfg.run.checkpoint_every,
            checkpoint_at: cfg.run.checkpoint_at.clone(),
        };
        let mut artifacts = Vec::new();
        let hook = |step: u64, a: &Agent| {
            let p = checkpoint_path(out, job.trial, step);
            a.to_checkpoint().save(&p)?;
            artifacts.push(rel(out, &p));
            Ok(())
        };
        let start = Instant::now();
        let report = match plan {
            Some(plans) => run_transfer(&plans[job.trial], &mut agent, &mut env, buffer, &opts, hook)?,
            None => {
                let mut buf = ReplayBuffer::new(cfg.agent.buffer_capacity, env.observation_dim(), env.action_dim());
                let r = train(&mut agent, &mut env, &mut buf, &opts, hook)?;
                if cfg.run.save_buffer {
                    let p = dir.join("buffer.bin");
                    write_with(&p, |w| buf.write(w))?;
                    artifacts.push(rel(out, &p));
                }
                r
            }
        };
        let wall = start.elapsed().as_secs_f64();
        let mut report = report;
        if !cfg.run.wall_clock {
            report.episodes.iter_mut().for_each(|e| e.wall_clock_s = 0.0);
        }

        let mut curve = LearningCurve::default();
        curve.push(job.trial, job.seed, report.episodes.clone());
        let p = dir.join("curve.csv");
        write_with(&p, |w| curve.write_csv(w))?;
        artifacts.push(rel(out, &p));
        let p = dir.join("final.ckpt");
        agent.to_checkpoint().save(&p).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        artifacts.push(rel(out, &p));

        let state = match &report.failure {
            Some(why) => {
                log::error!("trial {} failed: {why}", job.trial);
                TrialState::Failed(why.clone())
            }
            None => TrialState::Ok,
        };
        log::info!(
            "trial {} done: {} steps, {} episodes, {wall:.1}s",
            job.trial,
            report.env_steps,
            report.episodes.len()
        );
        Ok(TrialResult {
            status: TrialStatus {
                trial: job.trial,
                seed: job.seed,
                state,
                env_steps: report.env_steps,
                gradient_updates: report.gradient_updates,
                episodes: report.episodes.len(),
                wall_clock_s: wall,
            },
            episodes: report.episodes,
            artifacts,
            agent,
        })
    });
    let results: Vec<TrialResult> = results.into_iter().collect::<Result<_, _>>()?;
    let mut curve = LearningCurve::default();
    for r in &results {
        curve.push(r.status.trial, r.status.seed, r.episodes.clone());
    }
    let p = out.join("curves.csv");
    write_with(&p, |w| curve.write_csv(w))?;
    Ok((results, curve))
}

fn record(m: &mut RunManifest, results: &[TrialResult]) {
    m.artifacts.push("curves.csv".into());
    for r in results {
        m.trials.push(r.status.clone());
        m.artifacts.extend(r.artifacts.iter().cloned());
    }
}

fn trial_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    let seeds = cfg.run.trial_seeds();
    seeds[..cfg.run.trials.min(seeds.len())].to_vec()
}

/// Trains SAC from scratch, one agent per trial seed.
pub fn cmd_train(cfg: &ExperimentConfig, exec: Execution) -> Result<RunManifest, HarnessError> {
    let (mut m, start) = start_run(cfg, "train")?;
    let env = ks_env(&cfg.env, &cfg.cache_dir, exec)?;
    let jobs = trial_seeds(cfg)
        .into_iter()
        .enumerate()
        .map(|(trial, seed)| {
            let agent = Agent::new(
                cfg.agent.clone(),
                env.observation_dim(),
                env.action_dim(),
                env.action_bound(),
                derive_seed(seed, AGENT_STREAM),
            )?;
            Ok(TrialJob { trial, seed, slot: Mutex::new(Some((agent, None))) })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let (results, _) = run_trials(cfg, &env, jobs, None, exec)?;
    record(&mut m, &results);
    finish(m, start, &cfg.output_dir)
}

#[derive(Serialize)]
struct RetentionRow {
    trial: usize,
    source_trial: usize,
    source_return: f64,
    retention: Option<f64>,
    note: Option<String>,
}

/// Builds target agents from source checkpoints and trains them on the
/// configured environment. Every source artifact is checked before any
/// training starts.
pub fn cmd_transfer(cfg: &ExperimentConfig, exec: Execution) -> Result<RunManifest, HarnessError> {
    cfg.validate()?;
    let t = cfg.transfer.as_ref().ok_or_else(|| HarnessError::Config("`transfer` block is required".into()))?;
    let seeds = trial_seeds(cfg);

    let mut source_manifest = None;
    let mut sources: BTreeMap<usize, (PathBuf, Agent)> = BTreeMap::new();
    let mut source_of = vec![0; seeds.len()];
    if t.method.needs_source() {
        let run = t.source_run.as_ref().expect("validated");
        let sm = RunManifest::load(run)?;
        if sm.trials.is_empty() {
            return Err(HarnessError::MissingArtifact { path: run.clone(), reason: "source run has no trials".into() });
        }
        for (i, s) in source_of.iter_mut().enumerate() {
            *s = t.source_trial.unwrap_or(i % sm.trials.len());
        }
        for &j in &source_of {
            if let std::collections::btree_map::Entry::Vacant(slot) = sources.entry(j) {
                let p = checkpoint_path(run, j, t.pretrain_steps);
                let agent = load_agent(&p)?;
                slot.insert((p, agent));
            }
        }
        if !t.reset_buffer {
            for &j in sources.keys() {
                let p = trial_dir(run, j).join("buffer.bin");
                if !p.is_file() {
                    return Err(HarnessError::MissingArtifact {
                        path: p,
                        reason: "reset_buffer = false needs it".into(),
                    });
                }
            }
        }
        source_manifest = Some(sm);
    }

    let (mut m, start) = start_run(cfg, "transfer")?;
    let env = ks_env(&cfg.env, &cfg.cache_dir, exec)?;
    let dims = (env.observation_dim(), env.action_dim(), env.action_bound());
    let mut plans = Vec::with_capacity(seeds.len());
    let mut jobs = Vec::with_capacity(seeds.len());
    for (trial, &seed) in seeds.iter().enumerate() {
        let source = sources.get(&source_of[trial]);
        let plan = t.plan(source.map(|(p, _)| p.clone()));
        let agent = build_agent(&plan, source.map(|(_, a)| a), &cfg.agent, dims, derive_seed(seed, AGENT_STREAM))?;
        let buffer = match (&t.source_run, t.reset_buffer) {
            (Some(run), false) => {
                let p = trial_dir(run, source_of[trial]).join("buffer.bin");
                let f = fs::File::open(&p).map_err(HarnessError::io(&p))?;
                let b = ReplayBuffer::read(&mut BufReader::new(f)).map_err(|e| HarnessError::MissingArtifact {
                    path: p.clone(),
                    reason: format!("unreadable buffer: {e}"),
                })?;
                Some(b)
            }
            _ => None,
        };
        plans.push(plan);
        jobs.push(TrialJob { trial, seed, slot: Mutex::new(Some((agent, buffer))) });
    }
    write_json(&cfg.output_dir.join("plan.json"), &plans)?;
    m.artifacts.push("plan.json".into());

    let (results, _) = run_trials(cfg, &env, jobs, Some(&plans), exec)?;
    record(&mut m, &results);

    if let (Some(sm), true) = (&source_manifest, t.retention_episodes > 0) {
        if results.iter().all(|r| r.status.state == TrialState::Ok) {
            let source_env = ks_env(&sm.config.env, &cfg.cache_dir, exec)?;
            let eval_seeds: Vec<u64> =
                (0..t.retention_episodes as u64).map(|i| derive_seed(RETENTION_SEED_BASE, i)).collect();
            let mut rows = Vec::new();
            for r in &results {
                let j = source_of[r.status.trial];
                let (_, src) = &sources[&j];
                let base = evaluate_deterministic(src, &source_env, &eval_seeds, exec)?;
                let source_return = base.iter().sum::<f64>() / base.len() as f64;
                let (retention, note) = match retention_eval(&r.agent, &source_env, source_return, &eval_seeds, exec) {
                    Ok(s) => (Some(s), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                rows.push(RetentionRow { trial: r.status.trial, source_trial: j, source_return, retention, note });
            }
            write_json(&cfg.output_dir.join("retention.json"), &rows)?;
            m.artifacts.push("retention.json".into());
        }
    }
    finish(m, start, &cfg.output_dir)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub controlled: bool,
    pub control_steps: usize,
    /// Index of the last finite snapshot in the trajectory.
    pub last_valid_index: usize,
    pub final_time: f64,
    pub mean_reward: Option<f64>,
    pub failure: Option<String>,
}

/// Rolls out the environment from one seeded initial condition, driven by a
/// checkpointed policy or uncontrolled, and dumps the full trajectory.
pub fn cmd_simulate(cfg: &ExperimentConfig, exec: Execution) -> Result<SimulationSummary, HarnessError> {
    let agent = match &cfg.simulate.checkpoint {
        Some(p) => Some(load_agent(p)?),
        None => None,
    };
    let (mut m, start) = start_run(cfg, "simulate")?;
    let sim = &cfg.simulate;
    let ks = cfg.env.ks();
    let steps = (sim.duration / ks.dt_control()).round() as usize;
    // `step` keeps integrating past the episode length, so the configured
    // environment (and its cached normalization) is used as is.
    let mut env = ks_env(&cfg.env, &cfg.cache_dir, exec)?;
    let mut agent = agent;
    if let Some(a) = agent.as_mut() {
        if a.obs_dim != env.observation_dim() || a.act_dim != env.action_dim() {
            return Err(HarnessError::Config(format!(
                "checkpoint expects {}-dim observations and {}-dim actions, environment has {} and {}",
                a.obs_dim,
                a.act_dim,
                env.observation_dim(),
                env.action_dim()
            )));
        }
        a.rng = seeded(derive_seed(sim.seed, 3));
    }

    let mut obs = env.reset(sim.seed).map_err(|e| HarnessError::BlowUp(e.to_string()))?;
    let mut traj = Trajectory::new(ks.length, ks.n);
    let mut t = env.simulation().time();
    traj.push(t, env.field().grid_values());
    let mut rewards = Vec::with_capacity(steps);
    let mut failure = None;
    for k in 0..steps {
        let action = match agent.as_mut() {
            Some(a) => a.sample_action(&obs, sim.deterministic)?.0,
            None => vec![0.0; env.action_dim()],
        };
        match env.step(&action) {
            Ok(out) => {
                obs = out.observation;
                t = env.simulation().time();
                traj.push(t, env.field().grid_values());
                rewards.push((k + 1, t, out.reward));
            }
            Err(e @ EnvError::NonFinite { .. }) | Err(e @ EnvError::Spectral(_)) => {
                failure = Some(format!("control step {}: {e}", k + 1));
                break;
            }
            Err(e) => return Err(HarnessError::Runtime(e.to_string())),
        }
    }

    let dir = &cfg.output_dir;
    write_with(&dir.join("trajectory.bin"), |w| traj.write_binary(w))?;
    write_with(&dir.join("trajectory.csv"), |w| traj.write_csv(w))?;
    write_with(&dir.join("rewards.csv"), |w| {
        writeln!(w, "step,time,reward")?;
        for (k, t, r) in &rewards {
            writeln!(w, "{k},{t},{r:e}")?;
        }
        Ok(())
    })?;
    let summary = SimulationSummary {
        controlled: agent.is_some(),
        control_steps: rewards.len(),
        last_valid_index: traj.len() - 1,
        final_time: t,
        mean_reward: (!rewards.is_empty()).then(|| rewards.iter().map(|r| r.2).sum::<f64>() / rewards.len() as f64),
        failure: failure.clone(),
    };
    write_json(&dir.join("simulate.json"), &summary)?;
    m.artifacts.extend(["trajectory.bin", "trajectory.csv", "rewards.csv", "simulate.json"].map(String::from));
    m.trials.push(TrialStatus {
        trial: 0,
        seed: sim.seed,
        state: failure.map_or(TrialState::Ok, TrialState::Failed),
        env_steps: rewards.len() as u64,
        gradient_updates: 0,
        episodes: 0,
        wall_clock_s: start.elapsed().as_secs_f64(),
    });
    finish(m, start, dir)?;
    Ok(summary)
}

fn load_curves(run: &Path) -> Result<LearningCurve, HarnessError> {
    let p = run.join("curves.csv");
    let f = fs::File::open(&p).map_err(HarnessError::io(&p))?;
    LearningCurve::read_csv(BufReader::new(f))
        .map_err(|e| HarnessError::MissingArtifact { path: p, reason: format!("unreadable curves: {e}") })
}

fn mean_retention(run: &Path) -> Option<f64> {
    let text = fs::read_to_string(run.join("retention.json")).ok()?;
    let rows: Vec<serde_json::Value> = serde_json::from_str(&text).ok()?;
    let xs: Vec<f64> = rows.iter().filter_map(|r| r.get("retention")?.as_f64()).collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Scores every configured run against the from-scratch baseline.
pub fn cmd_scores(cfg: &ExperimentConfig) -> Result<Vec<ScoreReport>, HarnessError> {
    let sc = &cfg.scores;
    let baseline_dir =
        sc.baseline.as_ref().ok_or_else(|| HarnessError::Config("`scores.baseline` is required".into()))?;
    if sc.runs.is_empty() {
        return Err(HarnessError::Config("`scores.runs` is empty".into()));
    }
    let baseline = load_curves(baseline_dir)?.aggregate()?;
    let mut curves = Vec::new();
    for run in &sc.runs {
        curves.push((run, RunManifest::load(run)?, load_curves(run)?));
    }
    let (mut m, start) = start_run(cfg, "scores")?;
    let mut reports = Vec::new();
    for (run, manifest, curve) in curves {
        let agg = curve.aggregate()?;
        let ts = transfer_score(&agg, &baseline, sc.horizon).map_err(|e| match e {
            AnalysisError::InsufficientCoverage { .. } => {
                HarnessError::Config(format!("`scores.horizon` for {}: {e}", run.display()))
            }
            e => HarnessError::Runtime(format!("{}: {e}", run.display())),
        })?;
        let t = manifest.config.transfer.as_ref();
        reports.push(ScoreReport {
            method: t.map_or_else(|| "scratch".to_string(), |t| t.method.to_string()),
            source: t.and_then(|t| t.source_run.as_ref()).map(|p| p.display().to_string()),
            source_steps: t.filter(|t| t.method.needs_source()).map(|t| t.pretrain_steps),
            horizon: sc.horizon,
            transfer_score: Some(ts),
            final_return_score: final_return_score(&agg, sc.horizon, sc.window)?,
            retention_score: mean_retention(run),
        });
    }
    write_json(&cfg.output_dir.join("scores.json"), &reports)?;
    m.artifacts.push("scores.json".into());
    finish(m, start, &cfg.output_dir)?;
    Ok(reports)
}

fn analysis_agent(cfg: &ExperimentConfig) -> Result<Agent, HarnessError> {
    let p = cfg
        .analysis
        .checkpoint
        .as_ref()
        .ok_or_else(|| HarnessError::Config("`analysis.checkpoint` is required".into()))?;
    load_agent(p)
}

/// Perturbation sensitivity map of a progressive agent.
pub fn cmd_aps(cfg: &ExperimentConfig, exec: Execution) -> Result<crate::analysis::ApsMap, HarnessError> {
    let agent = analysis_agent(cfg)?;
    let (mut m, start) = start_run(cfg, "aps")?;
    let env = ks_env(&cfg.env, &cfg.cache_dir, exec)?;
    let map = aps_map(&agent, &env, &cfg.analysis.aps, exec)?;
    let dir = &cfg.output_dir;
    write_with(&dir.join("aps.csv"), |w| {
        writeln!(w, "layer,column,sigma,lambda,aps,status,monotone")?;
        for c in &map.cells {
            let sigma = c.sigma.map_or(String::new(), |s| format!("{s:e}"));
            let aps = map.score(c.layer, c.column);
            writeln!(w, "{},{},{sigma},{:e},{aps:.6},{:?},{}", c.layer, c.column, c.lambda, c.status, c.monotone)?;
        }
        Ok(())
    })?;
    write_json(&dir.join("aps.json"), &map)?;
    m.artifacts.extend(["aps.csv", "aps.json"].map(String::from));
    finish(m, start, dir)?;
    Ok(map)
}

/// Returns with the lateral input from each source layer removed.
pub fn cmd_ablate(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<(usize, f64)>, HarnessError> {
    let agent = analysis_agent(cfg)?;
    if cfg.analysis.ablation_seeds.is_empty() {
        return Err(HarnessError::Config("`analysis.ablation_seeds` is empty".into()));
    }
    let (mut m, start) = start_run(cfg, "ablate")?;
    let env = ks_env(&cfg.env, &cfg.cache_dir, exec)?;
    let rows = ablation_returns(&agent, &env, &cfg.analysis.ablation_seeds, exec)?;
    let clean = rows[0].1;
    write_with(&cfg.output_dir.join("ablation.csv"), |w| {
        writeln!(w, "ablated_layer,mean_return,relative_change")?;
        for (l, r) in &rows {
            let rel = if clean != 0.0 { (r - clean) / clean.abs() } else { f64::NAN };
            writeln!(w, "{l},{r:e},{rel:.6}")?;
        }
        Ok(())
    })?;
    m.artifacts.push("ablation.csv".into());
    finish(m, start, &cfg.output_dir)?;
    Ok(rows)
}

fn write_pod(
    dir: &Path,
    prefix: &str,
    p: &PodResult,
    x: &[f64],
    modes_out: usize,
) -> Result<Vec<String>, HarnessError> {
    let energies = format!("{prefix}energies.csv");
    write_with(&dir.join(&energies), |w| {
        writeln!(w, "mode,singular_value,energy,cumulative")?;
        for i in 0..p.singular_values.len() {
            writeln!(w, "{},{:e},{:e},{:.12}", i + 1, p.singular_values[i], p.energies[i], p.cumulative[i])?;
        }
        Ok(())
    })?;
    let modes = format!("{prefix}modes.csv");
    let k = modes_out.min(p.modes.ncols());
    write_with(&dir.join(&modes), |w| {
        let header: Vec<String> = (1..=k).map(|i| format!("mode{i}")).collect();
        writeln!(w, "x,{}", header.join(","))?;
        for (r, xr) in x.iter().enumerate() {
            let row: Vec<String> = (0..k).map(|c| format!("{:e}", p.modes[(r, c)])).collect();
            writeln!(w, "{xr},{}", row.join(","))?;
        }
        Ok(())
    })?;
    Ok(vec![energies, modes])
}

fn snapshot_matrix(t: &Trajectory) -> DMatrix<f64> {
    DMatrix::from_row_iterator(t.len(), t.n, t.values.iter().copied())
}

/// Proper orthogonal decomposition of a trajectory's deviation from the
/// configured reference, optionally split into large and small scales.
pub fn cmd_pod(cfg: &ExperimentConfig) -> Result<PodResult, HarnessError> {
    let path = cfg
        .analysis
        .trajectory
        .as_ref()
        .ok_or_else(|| HarnessError::Config("`analysis.trajectory` is required".into()))?;
    let traj = Trajectory::load(path, cfg.env.length).map_err(HarnessError::io(path))?;
    let (mut m, start) = start_run(cfg, "pod")?;
    let ks = crate::spectral::KsConfig { n: traj.n, ..cfg.env.ks() };
    let reference = reference_state(&ks, cfg.env.reference)?;
    let profile = reference.profile.grid_values().to_vec();
    let x: Vec<f64> = (0..traj.n).map(|i| i as f64 * ks.dx()).collect();
    let dir = &cfg.output_dir;
    let full = pod(&snapshot_matrix(&traj), &profile)?;
    m.artifacts.extend(write_pod(dir, "pod_", &full, &x, cfg.analysis.modes_out)?);
    if let Some(n_low) = cfg.analysis.filter_n_low {
        let (large, small) = spectral_filter(&traj.deviation_from(&profile), n_low);
        let zero = vec![0.0; traj.n];
        for (prefix, part) in [("pod_large_", &large), ("pod_small_", &small)] {
            let p = pod(&snapshot_matrix(part), &zero)?;
            m.artifacts.extend(write_pod(dir, prefix, &p, &x, cfg.analysis.modes_out)?);
        }
    }
    finish(m, start, dir)?;
    Ok(full)
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyStateSummary {
    pub name: String,
    pub l2_norm: f64,
    pub max_abs: f64,
}

/// Non-trivial equilibria at the configured length and grid.
pub fn cmd_steady_states(cfg: &ExperimentConfig) -> Result<Vec<SteadyStateSummary>, HarnessError> {
    let (mut m, start) = start_run(cfg, "steady-states")?;
    let ks = cfg.env.ks();
    let states = find_steady_states(&ks)?;
    let dir = &cfg.output_dir;
    let records: Vec<RefStateRecord> =
        states.iter().map(|s| RefStateRecord { length: ks.length, lambda: ks.lambda, state: s.clone() }).collect();
    let p = dir.join("steady_states.bin");
    save_refstates(&p, &records).map_err(HarnessError::io(&p))?;
    write_with(&dir.join("steady_states.csv"), |w| {
        let names: Vec<&str> = states.iter().map(|s| s.name.as_str()).collect();
        writeln!(w, "x,{}", names.join(","))?;
        for i in 0..ks.n {
            let row: Vec<String> = states.iter().map(|s| format!("{:e}", s.profile.grid_values()[i])).collect();
            writeln!(w, "{},{}", i as f64 * ks.dx(), row.join(","))?;
        }
        Ok(())
    })?;
    let summary: Vec<SteadyStateSummary> = states
        .iter()
        .map(|s| SteadyStateSummary {
            name: s.name.to_string(),
            l2_norm: s.profile.l2_norm(),
            max_abs: s.profile.grid_values().iter().fold(0.0, |a: f64, v| a.max(v.abs())),
        })
        .collect();
    write_json(&dir.join("steady_states.json"), &summary)?;
    m.artifacts.extend(["steady_states.bin", "steady_states.csv", "steady_states.json"].map(String::from));
    finish(m, start, dir)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub reference: String,
    pub n: usize,
    pub lambda: f64,
    pub d0_bar: f64,
    pub episodes: usize,
    pub seed_base: u64,
    pub cache_file: PathBuf,
}

/// Reward normalization for the configured environment; also primes the
/// shared cache used by every other command.
pub fn cmd_calibrate(cfg: &ExperimentConfig, exec: Execution) -> Result<Calibration, HarnessError> {
    let (mut m, start) = start_run(cfg, "calibrate")?;
    let reference = cached_reference(&cfg.cache_dir, &cfg.env, exec)?;
    let cal = Calibration {
        reference: reference.name.to_string(),
        n: cfg.env.n,
        lambda: cfg.env.lambda,
        d0_bar: reference.d0_bar.expect("calibrated"),
        episodes: D0_EPISODES,
        seed_base: D0_SEED_BASE,
        cache_file: super::reference_cache_path(&cfg.cache_dir, &cfg.env),
    };
    write_json(&cfg.output_dir.join("d0.json"), &cal)?;
    m.artifacts.push("d0.json".into());
    finish(m, start, &cfg.output_dir)?;
    Ok(cal)
}
