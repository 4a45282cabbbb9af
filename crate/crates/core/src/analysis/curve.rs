use std::io::{self, BufRead, Write};

use super::AnalysisError;
use crate::sac::EpisodeRecord;

/// Episodes in the trailing moving average applied per trial.
pub const SMOOTHING_WINDOW: usize = 10;

/// One trial's raw episode returns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialCurve {
    pub trial: usize,
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
}

impl TrialCurve {
    /// `(env_step, smoothed return)` with a trailing mean over up to
    /// `window` episodes.
    pub fn smoothed(&self, window: usize) -> Vec<(f64, f64)> {
        let w = window.max(1);
        let mut sum = 0.0;
        self.episodes
            .iter()
            .enumerate()
            .map(|(i, e)| {
                sum += e.episode_return;
                if i >= w {
                    sum -= self.episodes[i - w].episode_return;
                }
                (e.env_step as f64, sum / (i + 1).min(w) as f64)
            })
            .collect()
    }
}

/// Mean and sample standard deviation across trials on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub steps: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Piecewise-linear interpolation, held constant outside the data range.
fn interp(points: &[(f64, f64)], x: f64) -> f64 {
    let i = points.partition_point(|p| p.0 < x);
    if i == 0 {
        return points[0].1;
    }
    if i == points.len() {
        return points[i - 1].1;
    }
    let (x0, y0) = points[i - 1];
    let (x1, y1) = points[i];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

impl Aggregate {
    pub fn constant(steps: Vec<f64>, value: f64) -> Self {
        let n = steps.len();
        Self { steps, mean: vec![value; n], std: vec![0.0; n] }
    }

    pub fn from_mean(steps: Vec<f64>, mean: Vec<f64>) -> Self {
        let n = steps.len();
        Self { steps, mean, std: vec![0.0; n] }
    }

    pub fn last_step(&self) -> Option<f64> {
        self.steps.last().copied()
    }

    /// Mean curve at `x`, linear between grid points and constant beyond.
    pub fn mean_at(&self, x: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self.steps.iter().copied().zip(self.mean.iter().copied()).collect();
        interp(&pts, x)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            steps: self.steps.clone(),
            mean: self.mean.iter().map(|m| m * c).collect(),
            std: self.std.iter().map(|s| s * c.abs()).collect(),
        }
    }
}

/// Learning curves of several trials of one configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub trials: Vec<TrialCurve>,
}

impl LearningCurve {
    pub fn push(&mut self, trial: usize, seed: u64, episodes: Vec<EpisodeRecord>) {
        self.trials.push(TrialCurve { trial, seed, episodes });
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        for t in &self.trials {
            if let Some(index) = t.episodes.windows(2).position(|w| w[1].env_step <= w[0].env_step) {
                return Err(AnalysisError::NonIncreasingSteps { trial: t.trial, index: index + 1 });
            }
        }
        Ok(())
    }

    /// Smooths each trial and aggregates on the union of episode-end steps.
    pub fn aggregate(&self) -> Result<Aggregate, AnalysisError> {
        self.validate()?;
        let curves: Vec<Vec<(f64, f64)>> =
            self.trials.iter().filter(|t| !t.episodes.is_empty()).map(|t| t.smoothed(SMOOTHING_WINDOW)).collect();
        if curves.is_empty() {
            return Err(AnalysisError::EmptyCurve);
        }
        let mut steps: Vec<f64> = curves.iter().flatten().map(|p| p.0).collect();
        steps.sort_by(f64::total_cmp);
        steps.dedup();
        let n = curves.len() as f64;
        let mut mean = Vec::with_capacity(steps.len());
        let mut std = Vec::with_capacity(steps.len());
        for &x in &steps {
            let ys: Vec<f64> = curves.iter().map(|c| interp(c, x)).collect();
            let m = ys.iter().sum::<f64>() / n;
            let var = if ys.len() > 1 { ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            mean.push(m);
            std.push(var.sqrt());
        }
        Ok(Aggregate { steps, mean, std })
    }

    /// Mean raw return over the last `k` episodes of each trial.
    pub fn last_episodes_mean(&self, k: usize) -> Vec<f64> {
        self.trials
            .iter()
            .map(|t| {
                let tail = &t.episodes[t.episodes.len().saturating_sub(k)..];
                tail.iter().map(|e| e.episode_return).sum::<f64>() / tail.len().max(1) as f64
            })
            .collect()
    }

    pub const CSV_HEADER: &'static str = "trial,seed,env_step,episode_index,episode_return,wall_clock_s";

    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for t in &self.trials {
            for e in &t.episodes {
                writeln!(
                    w,
                    "{},{},{},{},{:e},{:.3}",
                    t.trial, t.seed, e.env_step, e.episode_index, e.episode_return, e.wall_clock_s
                )?;
            }
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self, AnalysisError> {
        let mut out = LearningCurve::default();
        let mut lines = r.lines();
        let header = lines.next().transpose()?;
        if header.as_deref().map(str::trim) != Some(Self::CSV_HEADER) {
            return Err(AnalysisError::Format("missing or unexpected header".into()));
        }
        for (no, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || AnalysisError::Format(format!("line {}: `{line}`", no + 2));
            if f.len() != 6 {
                return Err(bad());
            }
            let trial: usize = f[0].parse().map_err(|_| bad())?;
            let seed: u64 = f[1].parse().map_err(|_| bad())?;
            let rec = EpisodeRecord {
                env_step: f[2].parse().map_err(|_| bad())?,
                episode_index: f[3].parse().map_err(|_| bad())?,
                episode_return: f[4].parse().map_err(|_| bad())?,
                wall_clock_s: f[5].parse().map_err(|_| bad())?,
            };
            match out.trials.iter_mut().find(|t| t.trial == trial) {
                Some(t) => t.episodes.push(rec),
                None => out.push(trial, seed, vec![rec]),
            }
        }
        Ok(out)
    }
}
