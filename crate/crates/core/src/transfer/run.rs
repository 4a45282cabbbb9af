use crate::env::Environment;
use crate::par::Execution;
use crate::sac::{evaluate_deterministic, train, Agent, ReplayBuffer, SacConfig, SacError, TrainOptions, TrainReport};

use super::{build_pnn, build_target_agent, TransferError, TransferMethod, TransferPlan};

/// Builds the starting agent for any transfer method.
pub fn build_agent(
    plan: &TransferPlan,
    source: Option<&Agent>,
    config: &SacConfig,
    dims: (usize, usize, f64),
    seed: u64,
) -> Result<Agent, TransferError> {
    match plan.method {
        TransferMethod::FineTune(s) => build_target_agent(plan, s, source, config, dims, seed),
        TransferMethod::Progressive(v) => build_pnn(plan, v, source, config, dims, seed),
    }
}

/// Continues training `agent` in the target environment. Optimizer moments
/// are cleared and a fresh buffer is used unless the plan says otherwise and
/// a buffer is supplied.
pub fn run_transfer<E: Environment>(
    plan: &TransferPlan,
    agent: &mut Agent,
    env: &mut E,
    buffer: Option<ReplayBuffer>,
    opts: &TrainOptions,
    on_checkpoint: impl FnMut(u64, &Agent) -> Result<(), SacError>,
) -> Result<TrainReport, TransferError> {
    if plan.reset_optimizer {
        agent.reset_optimizers();
    }
    let mut buffer = match buffer {
        Some(b) if !plan.reset_buffer => b,
        _ => ReplayBuffer::new(agent.config.buffer_capacity, agent.obs_dim, agent.act_dim),
    };
    Ok(train(agent, env, &mut buffer, opts, on_checkpoint)?)
}

/// Mean deterministic return of `agent` in the source environment over one
/// episode per seed, relative to `source_final_return`.
pub fn retention_eval<E: Environment + Sync>(
    agent: &Agent,
    source_env: &E,
    source_final_return: f64,
    seeds: &[u64],
    exec: Execution,
) -> Result<f64, TransferError> {
    if source_final_return <= 0.0 || !source_final_return.is_finite() {
        return Err(TransferError::DegenerateBaseline(source_final_return));
    }
    if seeds.is_empty() {
        return Err(TransferError::Sac(SacError::InvalidConfig {
            field: "episodes",
            reason: "need at least one".into(),
        }));
    }
    let r = evaluate_deterministic(agent, source_env, seeds, exec)?;
    Ok(r.iter().sum::<f64>() / r.len() as f64 / source_final_return)
}
