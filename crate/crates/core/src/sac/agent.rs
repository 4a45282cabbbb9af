use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::{Batch, ReplayBuffer};
use super::config::SacConfig;
use super::policy::{record_squash, squash_sample, Policy};
use super::SacError;
use crate::nn::{adam_step, AdamConfig, Checkpoint, Entry, Gradients, Mlp, NnError, ParamStore, Tape, Var};
use crate::rng::{seeded, Rng, RngState};

pub const LOG_ALPHA: &str = "log_alpha";
pub const ACTOR_PREFIX: &str = "pi";
pub const CRITIC_PREFIX: &str = "q";

/// Differentiable action-value used by the actor step: `(tape, obs, action)
/// -> [B, 1]`, actions normalized.
pub type QFn<'a> = dyn Fn(&mut Tape, Var, Var) -> Result<Var, NnError> + 'a;

#[derive(Debug, Clone)]
pub struct Agent {
    pub config: SacConfig,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Environment action = bound * normalized action.
    pub action_bound: f64,
    pub policy: Policy,
    pub actor: ParamStore,
    pub critic_net: Mlp,
    pub critic1: ParamStore,
    pub critic2: ParamStore,
    pub target1: ParamStore,
    pub target2: ParamStore,
    pub log_alpha: ParamStore,
    pub rng: Rng,
    /// Gradient steps taken.
    pub updates: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct AgentMeta {
    config: SacConfig,
    obs_dim: usize,
    act_dim: usize,
    action_bound: f64,
    policy: Policy,
    critic_net: Mlp,
    rng: RngState,
    updates: u64,
}

fn concat_cols(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a, b]).expect("row counts agree")
}

/// Builds a critic store with freshly initialized weights.
pub fn fresh_critic(net: &Mlp, output_gain: f64, rng: &mut Rng) -> Result<ParamStore, NnError> {
    let mut s = ParamStore::new();
    net.init_params(&mut s, output_gain, rng)?;
    Ok(s)
}

/// Temperature loss `-mean(log_alpha * (log_prob + target_entropy))` and its
/// gradient, with log-probs treated as constants.
pub fn alpha_objective(
    log_alpha: &ParamStore,
    log_probs: &Array2<f64>,
    target_entropy: f64,
) -> Result<(f64, Gradients), NnError> {
    let mut tape = Tape::new();
    let la = tape.param(log_alpha, LOG_ALPHA)?;
    let shifted = tape.constant(log_probs.mapv(|v| v + target_entropy));
    let prod = tape.mul_scalar(shifted, la)?;
    let mean = tape.mean(prod);
    let loss = tape.scale(mean, -1.0);
    Ok((tape.scalar(loss), tape.backward(loss)?))
}

impl Agent {
    /// Fresh agent with MLP actor and critics.
    pub fn new(
        config: SacConfig,
        obs_dim: usize,
        act_dim: usize,
        action_bound: f64,
        seed: u64,
    ) -> Result<Self, SacError> {
        config.validate()?;
        let mut rng = seeded(seed);
        let actor_net = Mlp::new(ACTOR_PREFIX, obs_dim, &config.actor_hidden, 2 * act_dim);
        let mut actor = ParamStore::new();
        actor_net.init_params(&mut actor, config.output_gain, &mut rng)?;
        let critic_net = Mlp::new(CRITIC_PREFIX, obs_dim + act_dim, &config.critic_hidden, 1);
        let critic1 = fresh_critic(&critic_net, config.output_gain, &mut rng)?;
        let critic2 = fresh_critic(&critic_net, config.output_gain, &mut rng)?;
        Self::from_parts(config, action_bound, Policy::Mlp(actor_net), actor, critic_net, critic1, critic2, rng)
    }

    /// Assembles an agent from prepared networks. Targets start as copies of
    /// the critics; optimizer state is kept as given.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        config: SacConfig,
        action_bound: f64,
        policy: Policy,
        actor: ParamStore,
        critic_net: Mlp,
        critic1: ParamStore,
        critic2: ParamStore,
        rng: Rng,
    ) -> Result<Self, SacError> {
        config.validate()?;
        policy.check(&actor)?;
        critic_net.check(&critic1)?;
        critic_net.check(&critic2)?;
        let obs_dim = policy.input_dim();
        let act_dim = policy.action_dim();
        if critic_net.input_dim() != obs_dim + act_dim || critic_net.output_dim() != 1 {
            return Err(SacError::IncompatibleShapes(format!(
                "critic takes {} inputs, expected {}",
                critic_net.input_dim(),
                obs_dim + act_dim
            )));
        }
        let mut log_alpha = ParamStore::new();
        log_alpha.insert(LOG_ALPHA, Entry::new(vec![1], vec![config.init_log_alpha], true))?;
        Ok(Self {
            obs_dim,
            act_dim,
            action_bound,
            policy,
            target1: critic1.clone(),
            target2: critic2.clone(),
            actor,
            critic_net,
            critic1,
            critic2,
            log_alpha,
            rng,
            updates: 0,
            config,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.get(LOG_ALPHA).map_or(1.0, |e| e.values[0].exp())
    }

    pub fn target_entropy(&self) -> f64 {
        self.config.target_entropy_for(self.act_dim)
    }

    fn log_std_bounds(&self) -> (f64, f64) {
        (self.config.log_std_min, self.config.log_std_max)
    }

    /// Raw actor head `[mean | log_std]` for a batch of observations.
    pub fn actor_head(&self, obs: ArrayView2<'_, f64>) -> Result<Array2<f64>, SacError> {
        Ok(self.policy.forward_batch(&self.actor, obs)?)
    }

    fn standard_normal(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        let rng = &mut self.rng;
        Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
    }

    /// Environment-scaled action and log-prob of its normalized form.
    pub fn sample_action(&mut self, obs: &[f64], deterministic: bool) -> Result<(Vec<f64>, f64), SacError> {
        let (a, lp) = self.sample_normalized(obs, deterministic)?;
        Ok((a.into_iter().map(|v| v * self.action_bound).collect(), lp))
    }

    /// Normalized action in (-1, 1) and its log-prob.
    pub fn sample_normalized(&mut self, obs: &[f64], deterministic: bool) -> Result<(Vec<f64>, f64), SacError> {
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(SacError::NonFiniteObservation);
        }
        let x = ArrayView2::from_shape((1, obs.len()), obs).map_err(|_| SacError::IncompatibleShapes("obs".into()))?;
        let head = self.actor_head(x)?;
        let eps = (!deterministic).then(|| self.standard_normal(1, self.act_dim));
        let (a, lp) = squash_sample(&head, eps.as_ref(), self.log_std_bounds());
        Ok((a.into_raw_vec_and_offset().0, lp[0]))
    }

    /// Deterministic environment action; does not touch the agent RNG.
    pub fn deterministic_action(&self, obs: &[f64]) -> Result<Vec<f64>, SacError> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).map_err(|_| SacError::IncompatibleShapes("obs".into()))?;
        let head = self.actor_head(x)?;
        let (a, _) = squash_sample(&head, None, self.log_std_bounds());
        Ok(a.into_iter().map(|v| v * self.action_bound).collect())
    }

    /// Soft Bellman targets for a batch, using freshly sampled next actions.
    pub fn critic_targets(&mut self, batch: &Batch) -> Result<Array2<f64>, SacError> {
        let head = self.actor_head(batch.next_obs.view())?;
        let eps = self.standard_normal(batch.len(), self.act_dim);
        let (next_a, next_lp) = squash_sample(&head, Some(&eps), self.log_std_bounds());
        let x = concat_cols(batch.next_obs.view(), next_a.view());
        let q1 = self.critic_net.forward_batch(&self.target1, x.view())?;
        let q2 = self.critic_net.forward_batch(&self.target2, x.view())?;
        let alpha = self.alpha();
        let gamma = self.config.gamma;
        Ok(Array2::from_shape_fn((batch.len(), 1), |(r, _)| {
            let soft = q1[[r, 0]].min(q2[[r, 0]]) - alpha * next_lp[r];
            batch.rewards[[r, 0]] + gamma * (1.0 - batch.dones[[r, 0]]) * soft
        }))
    }

    /// One Adam step on each critic towards the soft Bellman target.
    pub fn critic_update(&mut self, batch: &Batch) -> Result<(f64, f64), SacError> {
        let y = self.critic_targets(batch)?;
        let x = concat_cols(batch.obs.view(), batch.actions.view());
        let adam = AdamConfig::with_lr(self.config.lr_critic);
        let mut losses = [0.0; 2];
        for (i, store) in [&mut self.critic1, &mut self.critic2].into_iter().enumerate() {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let q = self.critic_net.record(&mut tape, store, xv, true)?;
            let yv = tape.constant(y.clone());
            let d = tape.sub(q, yv)?;
            let sq = tape.square(d);
            let loss = tape.mean(sq);
            losses[i] = tape.scalar(loss);
            let g = tape.backward(loss)?;
            adam_step(store, &g, &adam)?;
        }
        Ok((losses[0], losses[1]))
    }

    /// Actor and temperature steps against the learned twin critics.
    pub fn actor_and_alpha_update(&mut self, batch: &Batch) -> Result<(f64, f64), SacError> {
        let (net, c1, c2) = (self.critic_net.clone(), self.critic1.clone(), self.critic2.clone());
        let q = move |tape: &mut Tape, obs: Var, act: Var| -> Result<Var, NnError> {
            let x = tape.concat_cols(obs, act)?;
            let q1 = net.record(tape, &c1, x, false)?;
            let q2 = net.record(tape, &c2, x, false)?;
            tape.min(q1, q2)
        };
        self.actor_and_alpha_update_with(batch, &q)
    }

    /// Actor and temperature steps against an arbitrary differentiable
    /// action-value `q`.
    pub fn actor_and_alpha_update_with(&mut self, batch: &Batch, q: &QFn<'_>) -> Result<(f64, f64), SacError> {
        let eps = self.standard_normal(batch.len(), self.act_dim);
        let alpha = self.alpha();
        let mut tape = Tape::new();
        let obs = tape.constant(batch.obs.clone());
        let head = self.policy.record(&mut tape, &self.actor, obs)?;
        let (action, logp) = record_squash(&mut tape, head, &eps, self.log_std_bounds())?;
        let qv = q(&mut tape, obs, action)?;
        let ent = tape.scale(logp, alpha);
        let diff = tape.sub(ent, qv)?;
        let loss = tape.mean(diff);
        let actor_loss = tape.scalar(loss);
        let g = tape.backward(loss)?;
        let log_probs = tape.value(logp).clone();
        adam_step(&mut self.actor, &g, &AdamConfig::with_lr(self.config.lr_actor))?;

        let (alpha_loss, ga) = alpha_objective(&self.log_alpha, &log_probs, self.target_entropy())?;
        adam_step(&mut self.log_alpha, &ga, &AdamConfig::with_lr(self.config.lr_alpha))?;
        Ok((actor_loss, alpha_loss))
    }

    /// Polyak averaging of the targets towards the critics.
    pub fn soft_update(&mut self) {
        let tau = self.config.tau;
        for (critic, target) in [(&self.critic1, &mut self.target1), (&self.critic2, &mut self.target2)] {
            for (name, t) in target.iter_mut() {
                match critic.get(name) {
                    // A frozen entry's fixed point; averaging would drift it by rounding.
                    Ok(c) if !c.trainable => t.values.copy_from_slice(&c.values),
                    Ok(c) => {
                        for (tv, cv) in t.values.iter_mut().zip(&c.values) {
                            *tv = (1.0 - tau) * *tv + tau * cv;
                        }
                    }
                    Err(_) => {}
                }
            }
        }
    }

    /// One full gradient step: critics, actor, temperature, targets.
    pub fn update(&mut self, buffer: &ReplayBuffer) -> Result<UpdateStats, SacError> {
        let idx = buffer.sample_indices(self.config.batch_size, &mut self.rng);
        let batch = buffer.batch(&idx);
        let (critic1_loss, critic2_loss) = self.critic_update(&batch)?;
        let (actor_loss, alpha_loss) = self.actor_and_alpha_update(&batch)?;
        self.soft_update();
        self.updates += 1;
        let stats = UpdateStats { critic1_loss, critic2_loss, actor_loss, alpha_loss };
        if [critic1_loss, critic2_loss, actor_loss, alpha_loss].iter().any(|v| !v.is_finite()) {
            return Err(SacError::Diverged(format!("{stats:?}")));
        }
        Ok(stats)
    }

    /// Zeroes Adam moments and step counters everywhere.
    pub fn reset_optimizers(&mut self) {
        for s in [&mut self.actor, &mut self.critic1, &mut self.critic2, &mut self.log_alpha] {
            s.reset_optimizer();
        }
    }

    /// All stores by role, in checkpoint order.
    pub fn stores(&self) -> [(&'static str, &ParamStore); 6] {
        [
            ("actor", &self.actor),
            ("critic1", &self.critic1),
            ("critic2", &self.critic2),
            ("target1", &self.target1),
            ("target2", &self.target2),
            ("log_alpha", &self.log_alpha),
        ]
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = AgentMeta {
            config: self.config.clone(),
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            action_bound: self.action_bound,
            policy: self.policy.clone(),
            critic_net: self.critic_net.clone(),
            rng: RngState::capture(&self.rng),
            updates: self.updates,
        };
        let mut ck = Checkpoint::new(serde_json::to_value(meta).expect("agent metadata serializes"));
        for (name, store) in self.stores() {
            ck = ck.with_store(name, store.clone());
        }
        ck
    }

    pub fn from_checkpoint(mut ck: Checkpoint) -> Result<Self, SacError> {
        let meta: AgentMeta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| SacError::Checkpoint(format!("agent metadata: {e}")))?;
        let mut take = |n: &str| ck.take_store(n).ok_or_else(|| SacError::Checkpoint(format!("missing store `{n}`")));
        let actor = take("actor")?;
        let critic1 = take("critic1")?;
        let critic2 = take("critic2")?;
        let target1 = take("target1")?;
        let target2 = take("target2")?;
        let log_alpha = take("log_alpha")?;
        let rng = meta.rng.restore().ok_or_else(|| SacError::Checkpoint("bad RNG state".into()))?;
        meta.policy.check(&actor)?;
        meta.critic_net.check(&critic1)?;
        meta.critic_net.check(&critic2)?;
        Ok(Self {
            config: meta.config,
            obs_dim: meta.obs_dim,
            act_dim: meta.act_dim,
            action_bound: meta.action_bound,
            policy: meta.policy,
            actor,
            critic_net: meta.critic_net,
            critic1,
            critic2,
            target1,
            target2,
            log_alpha,
            rng,
            updates: meta.updates,
        })
    }
}
