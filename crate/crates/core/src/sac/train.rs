use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::agent::Agent;
use super::buffer::{ReplayBuffer, Transition};
use super::SacError;
use crate::env::{EnvError, Environment};
use crate::par::{par_map, Execution};
use crate::rng::{derive_seed, seeded, Rng};

/// One finished training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Environment steps taken when the episode ended.
    pub env_step: u64,
    pub episode_index: u64,
    /// Undiscounted reward sum divided by the episode length.
    pub episode_return: f64,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub total_steps: u64,
    /// Base seed for per-episode environment resets.
    pub env_seed: u64,
    /// Invoke the checkpoint hook every this many env steps (0 = never).
    pub checkpoint_every: u64,
    /// Additional exact env steps at which to invoke the hook.
    pub checkpoint_at: Vec<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub episodes: Vec<EpisodeRecord>,
    pub env_steps: u64,
    pub gradient_updates: u64,
    /// Set when the trial was aborted; the curve up to that point is kept.
    pub failure: Option<String>,
}

/// Seed for the environment reset of episode `index`.
pub fn episode_seed(base: u64, index: u64) -> u64 {
    derive_seed(base, index)
}

/// Collects experience and runs update bursts of `gradient_steps` every
/// `train_freq` env steps once `learning_starts` steps have been taken.
/// `on_checkpoint(step, agent)` is called at the requested steps.
pub fn train<E: Environment>(
    agent: &mut Agent,
    env: &mut E,
    buffer: &mut ReplayBuffer,
    opts: &TrainOptions,
    mut on_checkpoint: impl FnMut(u64, &Agent) -> Result<(), SacError>,
) -> Result<TrainReport, SacError> {
    let start = Instant::now();
    let cfg = agent.config.clone();
    let mut report = TrainReport::default();
    let episode_len = env.episode_length() as f64;
    let mut episode_index = 0u64;
    let mut obs = env.reset(episode_seed(opts.env_seed, episode_index))?;
    let mut reward_sum = 0.0;

    for step in 1..=opts.total_steps {
        let action = if step <= cfg.learning_starts {
            (0..agent.act_dim).map(|_| agent.rng.random_range(-1.0..1.0)).collect()
        } else {
            agent.sample_normalized(&obs, false)?.0
        };
        let env_action: Vec<f64> = action.iter().map(|a| a * agent.action_bound).collect();
        let out = match env.step(&env_action) {
            Ok(o) => o,
            Err(e @ EnvError::NonFinite { .. }) | Err(e @ EnvError::Spectral(_)) => {
                report.failure = Some(format!("env step {step}: {e}"));
                report.env_steps = step - 1;
                return Ok(report);
            }
            Err(e) => return Err(e.into()),
        };
        reward_sum += out.reward;
        buffer.push(&Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward: out.reward,
            next_obs: out.observation.clone(),
            done: false,
        });
        obs = out.observation;
        report.env_steps = step;

        if out.done {
            report.episodes.push(EpisodeRecord {
                env_step: step,
                episode_index,
                episode_return: reward_sum / episode_len,
                wall_clock_s: start.elapsed().as_secs_f64(),
            });
            log::debug!("episode {episode_index} return {:.4}", reward_sum / episode_len);
            episode_index += 1;
            reward_sum = 0.0;
            obs = env.reset(episode_seed(opts.env_seed, episode_index))?;
        }

        if step > cfg.learning_starts && step % cfg.train_freq == 0 && !buffer.is_empty() {
            for _ in 0..cfg.gradient_steps {
                if let Err(e) = agent.update(buffer) {
                    report.failure = Some(format!("update at env step {step}: {e}"));
                    report.gradient_updates = agent.updates;
                    return Ok(report);
                }
            }
        }

        let periodic = opts.checkpoint_every > 0 && step % opts.checkpoint_every == 0;
        if periodic || opts.checkpoint_at.contains(&step) {
            on_checkpoint(step, agent)?;
        }
    }
    report.gradient_updates = agent.updates;
    Ok(report)
}

/// Runs one episode per seed with `policy(obs, rng)` producing environment
/// actions; returns per-episode mean rewards. Each episode gets its own
/// generator seeded from its env seed, so results do not depend on the
/// execution mode.
pub fn evaluate_with<E, F>(env: &E, seeds: &[u64], exec: Execution, policy: F) -> Result<Vec<f64>, SacError>
where
    E: Environment + Sync,
    F: Fn(&[f64], &mut Rng) -> Result<Vec<f64>, SacError> + Sync + Send,
{
    let runs = par_map(exec, seeds, |&seed| -> Result<f64, SacError> {
        let mut env = env.clone();
        let mut rng = seeded(derive_seed(seed, 0x5EED));
        let mut obs = env.reset(seed)?;
        let mut sum = 0.0;
        loop {
            let a = policy(&obs, &mut rng)?;
            let out = env.step(&a)?;
            sum += out.reward;
            obs = out.observation;
            if out.done {
                break;
            }
        }
        Ok(sum / env.episode_length() as f64)
    });
    runs.into_iter().collect()
}

/// Mean-reward returns of the deterministic policy, one per seed.
pub fn evaluate_deterministic<E: Environment + Sync>(
    agent: &Agent,
    env: &E,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<f64>, SacError> {
    evaluate_with(env, seeds, exec, |obs, _| agent.deterministic_action(obs))
}
