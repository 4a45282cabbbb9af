use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::analysis::ApsConfig;
use crate::sac::SacConfig;
use crate::spectral::{KsConfig, ReferenceName};
use crate::transfer::{ApplyTo, TransferMethod, TransferPlan};

/// Environment fidelity, physics and reward target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvBlock {
    pub n: usize,
    pub length: f64,
    pub lambda: f64,
    pub reference: ReferenceName,
    pub dt_solution: f64,
    pub substeps_per_control: usize,
    pub episode_length: usize,
    pub burn_in_time: f64,
    pub noise_amplitude: f64,
}

impl Default for EnvBlock {
    fn default() -> Self {
        let k = KsConfig::default();
        Self {
            n: k.n,
            length: k.length,
            lambda: k.lambda,
            reference: ReferenceName::U1,
            dt_solution: k.dt_solution,
            substeps_per_control: k.substeps_per_control,
            episode_length: k.episode_length,
            burn_in_time: k.burn_in_time,
            noise_amplitude: k.noise_amplitude,
        }
    }
}

impl EnvBlock {
    pub fn ks(&self) -> KsConfig {
        KsConfig {
            length: self.length,
            n: self.n,
            lambda: self.lambda,
            dt_solution: self.dt_solution,
            substeps_per_control: self.substeps_per_control,
            episode_length: self.episode_length,
            burn_in_time: self.burn_in_time,
            noise_amplitude: self.noise_amplitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    pub total_steps: u64,
    pub trials: usize,
    /// One base seed per trial; defaults to `0..trials`.
    pub seeds: Vec<u64>,
    pub checkpoint_every: u64,
    pub checkpoint_at: Vec<u64>,
    /// Also dump the replay buffer next to the final checkpoint.
    pub save_buffer: bool,
    /// Record elapsed seconds in curve files; when off the column is zero
    /// and reruns produce byte-identical files.
    pub wall_clock: bool,
}

/// Pretraining durations checkpointed by default, so sweeps over the source
/// budget can reuse one source run.
pub const PRETRAIN_SWEEP: [u64; 6] = [25_000, 50_000, 100_000, 200_000, 1_000_000, 10_000_000];

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            total_steps: 200_000,
            trials: 4,
            seeds: Vec::new(),
            checkpoint_every: 25_000,
            checkpoint_at: PRETRAIN_SWEEP.to_vec(),
            save_buffer: false,
            wall_clock: true,
        }
    }
}

impl RunBlock {
    pub fn trial_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.trials as u64).collect()
        } else {
            self.seeds.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferBlock {
    pub method: TransferMethod,
    /// Run directory of the source training run.
    #[serde(default)]
    pub source_run: Option<PathBuf>,
    /// Source checkpoint step to start from.
    #[serde(default)]
    pub pretrain_steps: u64,
    /// Source trial to use for every target trial; by default trial `i`
    /// uses source trial `i` modulo the source trial count.
    #[serde(default)]
    pub source_trial: Option<usize>,
    #[serde(default)]
    pub apply_to: ApplyTo,
    #[serde(default = "yes")]
    pub reset_buffer: bool,
    #[serde(default = "yes")]
    pub reset_optimizer: bool,
    #[serde(default)]
    pub adapter_dim: Option<usize>,
    /// Deterministic episodes in the source environment for retention
    /// scores (0 = skip).
    #[serde(default)]
    pub retention_episodes: usize,
}

fn yes() -> bool {
    true
}

impl TransferBlock {
    pub fn plan(&self, source_checkpoint: Option<PathBuf>) -> TransferPlan {
        TransferPlan {
            method: self.method,
            source_checkpoint,
            apply_to: self.apply_to,
            reset_buffer: self.reset_buffer,
            reset_optimizer: self.reset_optimizer,
            adapter_dim: self.adapter_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateBlock {
    /// Agent checkpoint driving the actuators; uncontrolled when absent.
    pub checkpoint: Option<PathBuf>,
    /// Simulated time after burn-in.
    pub duration: f64,
    pub seed: u64,
    pub deterministic: bool,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        Self { checkpoint: None, duration: 100.0, seed: 0, deterministic: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisBlock {
    /// Progressive agent checkpoint for `aps` and `ablate`.
    pub checkpoint: Option<PathBuf>,
    pub aps: ApsConfig,
    pub ablation_seeds: Vec<u64>,
    /// Trajectory dump for `pod`.
    pub trajectory: Option<PathBuf>,
    /// Grid size whose resolvable scales define the large-scale part.
    pub filter_n_low: Option<usize>,
    /// Leading modes written to `modes.csv`.
    pub modes_out: usize,
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        Self {
            checkpoint: None,
            aps: ApsConfig::default(),
            ablation_seeds: (0..10).collect(),
            trajectory: None,
            filter_n_low: None,
            modes_out: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoresBlock {
    /// Run directory of the from-scratch baseline.
    pub baseline: Option<PathBuf>,
    pub runs: Vec<PathBuf>,
    pub horizon: f64,
    pub window: usize,
}

impl Default for ScoresBlock {
    fn default() -> Self {
        Self { baseline: None, runs: Vec::new(), horizon: 250_000.0, window: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub output_dir: PathBuf,
    /// Shared cache for reference states and reward normalizations.
    pub cache_dir: PathBuf,
    pub env: EnvBlock,
    pub agent: SacConfig,
    pub run: RunBlock,
    pub transfer: Option<TransferBlock>,
    pub simulate: SimulateBlock,
    pub analysis: AnalysisBlock,
    pub scores: ScoresBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            output_dir: PathBuf::from("runs/experiment"),
            cache_dir: PathBuf::from("runs/cache"),
            env: EnvBlock::default(),
            agent: SacConfig::default(),
            run: RunBlock::default(),
            transfer: None,
            simulate: SimulateBlock::default(),
            analysis: AnalysisBlock::default(),
            scores: ScoresBlock::default(),
        }
    }
}

/// Command-line adjustments applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub seed_offset: u64,
    pub checkpoint_at: Vec<u64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if o.seed_offset != 0 {
            self.run.seeds = self.run.trial_seeds().iter().map(|s| s.wrapping_add(o.seed_offset)).collect();
        }
        self.run.checkpoint_at.extend(&o.checkpoint_at);
        self.run.checkpoint_at.sort_unstable();
        self.run.checkpoint_at.dedup();
    }

    /// Checks everything that can be checked without touching the disk.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |field: &str, msg: String| Err(HarnessError::Config(format!("`{field}`: {msg}")));
        self.env.ks().validate().map_err(|e| HarnessError::Config(format!("`env`: {e}")))?;
        self.agent.validate().map_err(|e| HarnessError::Config(format!("`agent`: {e}")))?;
        let run = &self.run;
        if run.trials == 0 {
            return err("run.trials", "must be at least 1".into());
        }
        if !run.seeds.is_empty() && run.seeds.len() != run.trials {
            return err("run.seeds", format!("{} seeds for {} trials", run.seeds.len(), run.trials));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = run.seeds.iter().find(|s| !seen.insert(**s)) {
            return err("run.seeds", format!("seed {dup} appears more than once"));
        }
        if run.total_steps < self.agent.learning_starts {
            return err(
                "run.total_steps",
                format!("{} is below agent.learning_starts = {}", run.total_steps, self.agent.learning_starts),
            );
        }
        if let Some(t) = &self.transfer {
            if t.method.needs_source() {
                if t.source_run.is_none() {
                    return err("transfer.source_run", format!("required by method `{}`", t.method));
                }
                if t.pretrain_steps == 0 {
                    return err("transfer.pretrain_steps", "must be positive".into());
                }
            }
            if t.adapter_dim == Some(0) {
                return err("transfer.adapter_dim", "must be positive".into());
            }
        }
        if !(self.simulate.duration >= 0.0) {
            return err("simulate.duration", format!("must be non-negative, got {}", self.simulate.duration));
        }
        let aps = &self.analysis.aps;
        if !(aps.drop > 0.0 && aps.drop < 1.0) {
            return err("analysis.aps.drop", format!("must lie in (0, 1), got {}", aps.drop));
        }
        if aps.log10_sigma_min >= aps.log10_sigma_max {
            return err("analysis.aps", "empty sigma bracket".into());
        }
        if !(self.scores.horizon > 0.0) || self.scores.window == 0 {
            return err("scores", "horizon and window must be positive".into());
        }
        Ok(())
    }
}
