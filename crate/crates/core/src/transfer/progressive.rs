use crate::nn::{Mlp, ParamStore};
use crate::pnn::ProgressiveActor;
use crate::rng::seeded;
use crate::sac::{fresh_critic, Agent, Policy, SacConfig, ACTOR_PREFIX, CRITIC_PREFIX};

use super::{PnnVariant, TransferError, TransferPlan};

/// Progressive actor agent. The source actor (or a random network of the
/// same layout for [`PnnVariant::RandomSource`]) becomes the frozen first
/// column; a fresh trainable column is added. A progressive source gains one
/// more column.
pub fn build_pnn(
    plan: &TransferPlan,
    variant: PnnVariant,
    source: Option<&Agent>,
    config: &SacConfig,
    dims: (usize, usize, f64),
    seed: u64,
) -> Result<Agent, TransferError> {
    let (obs_dim, act_dim, bound) = dims;
    let mut rng = seeded(seed);
    let (mut pnn, mut store) = match (variant, source) {
        (PnnVariant::RandomSource, _) => {
            let hidden = match source.map(|s| &s.policy) {
                Some(Policy::Mlp(net)) => net.layers[..net.depth() - 1].iter().map(|l| l.out_dim).collect(),
                _ => config.actor_hidden.clone(),
            };
            let net = Mlp::new(ACTOR_PREFIX, obs_dim, &hidden, 2 * act_dim);
            let mut s = ParamStore::new();
            net.init_params(&mut s, config.output_gain, &mut rng)?;
            ProgressiveActor::from_source(&net, &s)?
        }
        (_, None) => return Err(TransferError::MissingSource(plan.method)),
        (_, Some(src)) => {
            if src.obs_dim != obs_dim || src.act_dim != act_dim {
                return Err(TransferError::IncompatibleShapes(format!(
                    "source agent is {}->{}, target environment is {obs_dim}->{act_dim}",
                    src.obs_dim, src.act_dim
                )));
            }
            match &src.policy {
                Policy::Mlp(net) => ProgressiveActor::from_source(net, &src.actor)?,
                Policy::Progressive(p) => (p.clone(), src.actor.clone()),
            }
        }
    };
    pnn.add_column(&mut store, plan.adapter_dim, config.output_gain, &mut rng)?;

    let (critic_net, c1, c2) = match (variant, source) {
        (PnnVariant::FineTunedCritic, Some(src)) => {
            let (mut c1, mut c2) = (src.critic1.clone(), src.critic2.clone());
            c1.set_all_trainable(true);
            c2.set_all_trainable(true);
            (src.critic_net.clone(), c1, c2)
        }
        _ => {
            let hidden = source.map_or_else(
                || config.critic_hidden.clone(),
                |s| s.critic_net.layers[..s.critic_net.depth() - 1].iter().map(|l| l.out_dim).collect(),
            );
            let net = Mlp::new(CRITIC_PREFIX, obs_dim + act_dim, &hidden, 1);
            let c1 = fresh_critic(&net, config.output_gain, &mut rng)?;
            let c2 = fresh_critic(&net, config.output_gain, &mut rng)?;
            (net, c1, c2)
        }
    };
    let mut cfg = config.clone();
    cfg.actor_hidden = pnn.columns[0].layers[..pnn.hidden_layers()].iter().map(|l| l.out_dim).collect();
    cfg.critic_hidden = critic_net.layers[..critic_net.depth() - 1].iter().map(|l| l.out_dim).collect();
    Ok(Agent::from_parts(cfg, bound, Policy::Progressive(pnn), store, critic_net, c1, c2, rng)?)
}
