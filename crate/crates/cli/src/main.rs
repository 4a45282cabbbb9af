use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mfrl::harness::{self, ExperimentConfig, HarnessError, Overrides};
use mfrl::par::{with_workers, Execution};

#[derive(Parser)]
#[command(name = "mfrl", version, about = "Multifidelity SAC experiments on the Kuramoto-Sivashinsky equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents from scratch, one per trial seed.
    Train(Common),
    /// Initialize agents from a source run and train on the target setting.
    Transfer(Common),
    /// Dump a controlled or uncontrolled trajectory.
    Simulate(Common),
    /// Transfer and final-return scores against a baseline run.
    Scores(Common),
    /// Perturbation sensitivity map of a progressive agent.
    Aps(Common),
    /// Proper orthogonal decomposition of a trajectory dump.
    Pod(Common),
    /// Returns with lateral connections removed layer by layer.
    Ablate(Common),
    /// Solve for the non-trivial equilibria.
    SteadyStates(Common),
    /// Compute and cache the reward normalization.
    Calibrate(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads for trials and evaluation episodes (0 = all cores, 1 = sequential).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Added to every trial seed.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// Extra env steps at which to checkpoint (comma separated or repeated).
    #[arg(long, value_delimiter = ',')]
    checkpoint_at: Vec<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&Overrides {
            out: self.out.clone(),
            workers: self.workers,
            seed_offset: self.seed_offset,
            checkpoint_at: self.checkpoint_at.clone(),
        });
        cfg.validate()?;
        Ok(cfg)
    }

    fn exec(&self) -> Execution {
        if self.workers == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cmd: &Command) -> Result<(), HarnessError> {
    let common = match cmd {
        Command::Train(c)
        | Command::Transfer(c)
        | Command::Simulate(c)
        | Command::Scores(c)
        | Command::Aps(c)
        | Command::Pod(c)
        | Command::Ablate(c)
        | Command::SteadyStates(c)
        | Command::Calibrate(c) => c,
    };
    let cfg = common.load()?;
    let exec = common.exec();
    with_workers(common.workers, || {
        match cmd {
            Command::Train(_) => {
                let m = harness::cmd_train(&cfg, exec)?;
                println!("{} trials written to {}", m.trials.len(), cfg.output_dir.display());
            }
            Command::Transfer(_) => {
                let m = harness::cmd_transfer(&cfg, exec)?;
                println!("{} trials written to {}", m.trials.len(), cfg.output_dir.display());
            }
            Command::Simulate(_) => print_json(&harness::cmd_simulate(&cfg, exec)?),
            Command::Scores(_) => print_json(&harness::cmd_scores(&cfg)?),
            Command::Aps(_) => {
                let map = harness::cmd_aps(&cfg, exec)?;
                for (l, row) in map.aps.iter().enumerate() {
                    let cells: Vec<String> = row.iter().map(|a| format!("{a:.3}")).collect();
                    println!("layer {}: {}", l + 1, cells.join(" "));
                }
            }
            Command::Pod(_) => {
                let p = harness::cmd_pod(&cfg)?;
                println!("modes for 90% / 99% energy: {} / {}", p.modes_for_fraction(0.9), p.modes_for_fraction(0.99));
            }
            Command::Ablate(_) => {
                for (l, r) in harness::cmd_ablate(&cfg, exec)? {
                    println!("layer {l}: {r:.4}");
                }
            }
            Command::SteadyStates(_) => print_json(&harness::cmd_steady_states(&cfg)?),
            Command::Calibrate(_) => print_json(&harness::cmd_calibrate(&cfg, exec)?),
        }
        Ok(())
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
