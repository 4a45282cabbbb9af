use crate::nn::{Mlp, ParamStore};
use crate::rng::{seeded, Rng};
use crate::sac::{fresh_critic, Agent, Policy, SacConfig, LOG_ALPHA};

use super::{Strategy, TransferError, TransferPlan};

/// Trainable flag of layer `layer` (1-based) in a network of `depth` layers
/// of which the last `new_layers` hidden ones were inserted.
pub fn layer_mask(strategy: Strategy, layer: usize, depth: usize) -> bool {
    match strategy {
        Strategy::FineTuneLast => layer == depth,
        Strategy::FineTuneLastTwo => layer + 1 >= depth,
        Strategy::NewLayerPartial => layer + strategy.new_layers() >= depth,
        _ => true,
    }
}

/// Copies `net` into a deeper network with `new_layers` hidden layers of the
/// last hidden width inserted before the output. Source layers keep their
/// values, inserted layers get orthogonal sqrt 2 initialization, and the
/// output layer is retained. Trainable flags follow `strategy`.
pub fn expand_mlp(
    net: &Mlp,
    store: &ParamStore,
    strategy: Strategy,
    rng: &mut Rng,
) -> Result<(Mlp, ParamStore), TransferError> {
    net.check(store)?;
    let n = strategy.new_layers();
    let src_hidden: Vec<usize> = net.layers[..net.depth() - 1].iter().map(|l| l.out_dim).collect();
    let width = *src_hidden
        .last()
        .ok_or_else(|| TransferError::IncompatibleShapes(format!("`{}` has no hidden layer", net.prefix)))?;
    let mut hidden = src_hidden.clone();
    hidden.extend(std::iter::repeat_n(width, n));
    let target = Mlp::new(net.prefix.clone(), net.input_dim(), &hidden, net.output_dim());
    let depth = target.depth();
    let mut out = ParamStore::new();
    for layer in 1..=depth {
        let trainable = layer_mask(strategy, layer, depth);
        let src_layer = if layer <= src_hidden.len() {
            Some(layer)
        } else if layer == depth {
            Some(net.depth())
        } else {
            None
        };
        match src_layer {
            Some(s) => {
                for (from, to) in net.layer_params(s).iter().zip(target.layer_params(layer)) {
                    let mut e = store.get(from)?.clone();
                    e.trainable = trainable;
                    out.insert(to, e)?;
                }
            }
            None => target.init_layer(&mut out, layer, std::f64::consts::SQRT_2, trainable, rng)?,
        }
    }
    Ok((target, out))
}

fn check_dims(source: &Agent, obs_dim: usize, act_dim: usize) -> Result<(), TransferError> {
    if source.obs_dim != obs_dim || source.act_dim != act_dim {
        return Err(TransferError::IncompatibleShapes(format!(
            "source agent is {}->{}, target environment is {obs_dim}->{act_dim}",
            source.obs_dim, source.act_dim
        )));
    }
    Ok(())
}

fn hidden_widths(net: &Mlp) -> Vec<usize> {
    net.layers[..net.depth() - 1].iter().map(|l| l.out_dim).collect()
}

/// Builds the agent that starts training in the target environment.
/// `config` supplies hyperparameters; architectures come from the source
/// (expanded as the strategy requires). The temperature is carried over
/// from the source; target critics restart equal to the critics.
pub fn build_target_agent(
    plan: &TransferPlan,
    strategy: Strategy,
    source: Option<&Agent>,
    config: &SacConfig,
    dims: (usize, usize, f64),
    seed: u64,
) -> Result<Agent, TransferError> {
    let (obs_dim, act_dim, bound) = dims;
    if strategy == Strategy::Scratch {
        return Ok(Agent::new(config.clone(), obs_dim, act_dim, bound, seed)?);
    }
    let source = source.ok_or(TransferError::MissingSource(plan.method))?;
    check_dims(source, obs_dim, act_dim)?;
    let Policy::Mlp(src_actor) = &source.policy else {
        return Err(TransferError::IncompatibleShapes("fine-tuning needs a plain MLP source actor".into()));
    };
    let mut rng = seeded(seed);
    let actor_strategy = if strategy == Strategy::FineTuneActorOnly { Strategy::FineTuneAll } else { strategy };
    let (actor_net, actor) = expand_mlp(src_actor, &source.actor, actor_strategy, &mut rng)?;

    let transfer_critics = plan.transfers_critics();
    let (critic_net, critic1, critic2) = if transfer_critics {
        let (net, c1) = expand_mlp(&source.critic_net, &source.critic1, strategy, &mut rng)?;
        let (_, c2) = expand_mlp(&source.critic_net, &source.critic2, strategy, &mut rng)?;
        (net, c1, c2)
    } else {
        let net = source.critic_net.clone();
        let c1 = fresh_critic(&net, config.output_gain, &mut rng)?;
        let c2 = fresh_critic(&net, config.output_gain, &mut rng)?;
        (net, c1, c2)
    };

    let mut cfg = config.clone();
    cfg.actor_hidden = hidden_widths(&actor_net);
    cfg.critic_hidden = hidden_widths(&critic_net);
    cfg.init_log_alpha = source.log_alpha.get(LOG_ALPHA)?.values[0];
    let agent = Agent::from_parts(cfg, bound, Policy::Mlp(actor_net), actor, critic_net, critic1, critic2, rng)?;
    Ok(agent)
}
