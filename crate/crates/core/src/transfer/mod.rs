//! Transfer from a low-fidelity source agent: fine-tuning strategies with
//! freeze masks and network expansion, and progressive-network variants.

mod finetune;
mod progressive;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;
use crate::pnn::PnnError;
use crate::sac::SacError;

pub use finetune::{build_target_agent, expand_mlp, layer_mask};
pub use progressive::build_pnn;
pub use run::{build_agent, retention_eval, run_transfer};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("unknown transfer strategy `{0}`")]
    UnknownStrategy(String),
    #[error("incompatible shapes: {0}")]
    IncompatibleShapes(String),
    #[error("strategy `{0}` needs a source agent")]
    MissingSource(TransferMethod),
    #[error("source final return {0} is not positive")]
    DegenerateBaseline(f64),
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pnn(#[from] PnnError),
}

/// Fine-tuning strategies. The number of hidden layers inserted before the
/// output and the trainable set follow from the variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Scratch,
    FineTuneAll,
    FineTuneLast,
    FineTuneLastTwo,
    NewLayerPartial,
    NewLayerAll,
    TwoNewLayersAll,
    ThreeNewLayersAll,
    FineTuneActorOnly,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::Scratch,
        Strategy::FineTuneAll,
        Strategy::FineTuneLast,
        Strategy::FineTuneLastTwo,
        Strategy::NewLayerPartial,
        Strategy::NewLayerAll,
        Strategy::TwoNewLayersAll,
        Strategy::ThreeNewLayersAll,
        Strategy::FineTuneActorOnly,
    ];

    pub fn new_layers(self) -> usize {
        match self {
            Strategy::NewLayerPartial | Strategy::NewLayerAll => 1,
            Strategy::TwoNewLayersAll => 2,
            Strategy::ThreeNewLayersAll => 3,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Scratch => "scratch",
            Strategy::FineTuneAll => "fine-tune-all",
            Strategy::FineTuneLast => "fine-tune-last",
            Strategy::FineTuneLastTwo => "fine-tune-last-two",
            Strategy::NewLayerPartial => "new-layer-partial",
            Strategy::NewLayerAll => "new-layer-all",
            Strategy::TwoNewLayersAll => "two-new-layers-all",
            Strategy::ThreeNewLayersAll => "three-new-layers-all",
            Strategy::FineTuneActorOnly => "fine-tune-actor-only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PnnVariant {
    /// Source actor as frozen column, fresh critics.
    Standard,
    /// Randomly initialized frozen column, fresh critics.
    RandomSource,
    /// Source actor as frozen column, critics copied and fine-tuned.
    FineTunedCritic,
}

impl PnnVariant {
    pub const ALL: [PnnVariant; 3] = [PnnVariant::Standard, PnnVariant::RandomSource, PnnVariant::FineTunedCritic];

    pub fn name(self) -> &'static str {
        match self {
            PnnVariant::Standard => "pnn",
            PnnVariant::RandomSource => "pnn-random-source",
            PnnVariant::FineTunedCritic => "pnn-fine-tuned-critic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TransferMethod {
    FineTune(Strategy),
    Progressive(PnnVariant),
}

impl TransferMethod {
    pub fn name(self) -> &'static str {
        match self {
            TransferMethod::FineTune(s) => s.name(),
            TransferMethod::Progressive(v) => v.name(),
        }
    }

    pub fn all() -> impl Iterator<Item = TransferMethod> {
        Strategy::ALL
            .into_iter()
            .map(TransferMethod::FineTune)
            .chain(PnnVariant::ALL.into_iter().map(TransferMethod::Progressive))
    }

    pub fn needs_source(self) -> bool {
        !matches!(
            self,
            TransferMethod::FineTune(Strategy::Scratch) | TransferMethod::Progressive(PnnVariant::RandomSource)
        )
    }
}

impl fmt::Display for TransferMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransferMethod {
    type Err = TransferError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::all().find(|m| m.name() == s).ok_or_else(|| TransferError::UnknownStrategy(s.to_string()))
    }
}

impl TryFrom<String> for TransferMethod {
    type Error = TransferError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TransferMethod> for String {
    fn from(m: TransferMethod) -> Self {
        m.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApplyTo {
    /// Critics are transferred with the same mask as the actor.
    #[default]
    ActorAndCritics,
    /// Critics are re-initialized and trained from scratch.
    ActorOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferPlan {
    pub method: TransferMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub apply_to: ApplyTo,
    #[serde(default = "yes")]
    pub reset_buffer: bool,
    #[serde(default = "yes")]
    pub reset_optimizer: bool,
    /// Progressive variants only; `None` uses the default width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapter_dim: Option<usize>,
}

fn yes() -> bool {
    true
}

impl TransferPlan {
    pub fn new(method: TransferMethod) -> Self {
        Self {
            method,
            source_checkpoint: None,
            apply_to: ApplyTo::default(),
            reset_buffer: true,
            reset_optimizer: true,
            adapter_dim: None,
        }
    }

    pub fn fine_tune(strategy: Strategy) -> Self {
        Self::new(TransferMethod::FineTune(strategy))
    }

    pub fn progressive(variant: PnnVariant) -> Self {
        Self::new(TransferMethod::Progressive(variant))
    }

    /// Whether critics come from the source.
    pub fn transfers_critics(&self) -> bool {
        match self.method {
            TransferMethod::FineTune(Strategy::Scratch | Strategy::FineTuneActorOnly) => false,
            TransferMethod::FineTune(_) => self.apply_to == ApplyTo::ActorAndCritics,
            TransferMethod::Progressive(v) => v == PnnVariant::FineTunedCritic,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in TransferMethod::all() {
            assert_eq!(m.name().parse::<TransferMethod>().unwrap(), m);
        }
        assert_eq!(TransferMethod::all().count(), 12);
        assert!(matches!("fine-tune-first".parse::<TransferMethod>(), Err(TransferError::UnknownStrategy(_))));
    }

    #[test]
    fn plan_json_defaults() {
        let p: TransferPlan = serde_json::from_str(r#"{"method":"new-layer-partial"}"#).unwrap();
        assert_eq!(p, TransferPlan::fine_tune(Strategy::NewLayerPartial));
        let back: TransferPlan = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
