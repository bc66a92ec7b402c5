use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    run_episode, theoretical_bound, DiagnosticStats, Episode, ResolvedRun, RunConfig, StageTotals,
};
use crate::error::{Error, Result};

/// Cross-seed statistics for one epoch index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochAggregate {
    pub epoch: u32,
    /// Seeds that completed this epoch.
    pub runs: usize,
    /// Mean step count at the end of the epoch.
    pub mean_end: f64,
    pub mean_regret: f64,
    pub stderr_regret: f64,
    /// Share of runs whose verification (when it ran) confirmed distinct IDs.
    pub verify_success_rate: Option<f64>,
    /// Share of runs that exploited a truly optimal matching.
    pub optimal_rate: Option<f64>,
    /// Closed-form bound evaluated at `mean_end`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub seeds: Vec<u64>,
    pub resolved: ResolvedRun,
    /// Mean cumulative regret after step `t` at index `t - 1`, over the
    /// steps every run reached.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub epochs: Vec<EpochAggregate>,
    /// Per-seed diagnostics, in seed order.
    pub diagnostics: Vec<DiagnosticStats>,
    /// Final cumulative regret of each seed.
    pub totals: Vec<f64>,
    /// Stage totals averaged over seeds.
    pub stage_means: StageTotals,
}

impl SweepResult {
    pub fn fixing_attempts(&self) -> u32 {
        self.diagnostics.iter().map(|d| d.fixing_attempts).sum()
    }

    pub fn fixing_successes(&self) -> u32 {
        self.diagnostics.iter().map(|d| d.fixing_successes).sum()
    }

    pub fn fixing_success_rate(&self) -> Option<f64> {
        let n = self.fixing_attempts();
        (n > 0).then(|| self.fixing_successes() as f64 / n as f64)
    }

    pub fn fault_count(&self) -> u32 {
        self.diagnostics.iter().map(|d| d.fault_count).sum()
    }

    /// `(epoch, mean steps, mean regret)` at each epoch boundary completed by
    /// every seed.
    pub fn boundary_points(&self) -> Vec<(u32, f64, f64)> {
        let n = self.seeds.len();
        self.epochs
            .iter()
            .filter(|e| e.runs == n)
            .map(|e| (e.epoch, e.mean_end, e.mean_regret))
            .collect()
    }
}

/// Running mean and sum of squared deviations (Welford).
#[derive(Default)]
struct Moments {
    n: Vec<u32>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn push(&mut self, idx: usize, x: f64) {
        if idx >= self.mean.len() {
            self.n.resize(idx + 1, 0);
            self.mean.resize(idx + 1, 0.0);
            self.m2.resize(idx + 1, 0.0);
        }
        self.n[idx] += 1;
        let d = x - self.mean[idx];
        self.mean[idx] += d / self.n[idx] as f64;
        self.m2[idx] += d * (x - self.mean[idx]);
    }

    fn stderr(&self, idx: usize) -> f64 {
        let n = self.n[idx];
        if n < 2 {
            0.0
        } else {
            (self.m2[idx] / (n - 1) as f64 / n as f64).sqrt()
        }
    }
}

#[derive(Default)]
struct EpochAccumulator {
    regret: Moments,
    end: Moments,
    verified: u32,
    verify_successes: u32,
    exploited: u32,
    optimal: u32,
}

/// Runs one episode per seed and averages them.
///
/// Episodes execute in parallel, but results are merged strictly in seed
/// order, so the output does not depend on the thread count.
pub fn run_sweep(config: &RunConfig, seeds: &[u64]) -> Result<SweepResult> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "a sweep needs at least one seed".into(),
        ));
    }
    let resolved = config.resolve()?;
    let chunk = rayon::current_num_threads().max(1);

    let mut curve = Moments::default();
    let mut min_len = usize::MAX;
    let mut by_epoch: Vec<EpochAccumulator> = Vec::new();
    let mut diagnostics = Vec::with_capacity(seeds.len());
    let mut totals = Vec::with_capacity(seeds.len());
    let mut stage_means = StageTotals::default();

    for group in seeds.chunks(chunk) {
        let episodes: Vec<Result<Episode>> =
            group.par_iter().map(|&s| run_episode(config, s)).collect();
        for ep in episodes {
            let ep = ep?;
            min_len = min_len.min(ep.trace.steps.len());
            for (i, s) in ep.trace.steps.iter().enumerate() {
                curve.push(i, s.cumulative);
            }
            for e in ep.diagnostics.completed_epochs() {
                let idx = e.epoch as usize - 1;
                if idx >= by_epoch.len() {
                    by_epoch.resize_with(idx + 1, Default::default);
                }
                let acc = &mut by_epoch[idx];
                acc.regret.push(0, e.cum_regret);
                acc.end.push(0, e.end as f64);
                if let Some(v) = e.verdict {
                    acc.verified += 1;
                    acc.verify_successes += u32::from(v);
                }
                if let Some(o) = e.matching_optimal {
                    acc.exploited += 1;
                    acc.optimal += u32::from(o);
                }
            }
            let s = ep.trace.stages;
            stage_means.exploration += s.exploration;
            stage_means.matching += s.matching;
            stage_means.exploitation += s.exploitation;
            totals.push(ep.trace.total());
            diagnostics.push(ep.diagnostics);
        }
    }
    let n = seeds.len() as f64;
    stage_means.exploration /= n;
    stage_means.matching /= n;
    stage_means.exploitation /= n;

    let len = min_len.min(curve.mean.len());
    let stderr = (0..len).map(|i| curve.stderr(i)).collect();
    let mut mean = curve.mean;
    mean.truncate(len);

    let epochs = by_epoch
        .iter()
        .enumerate()
        .filter(|(_, acc)| !acc.end.n.is_empty())
        .map(|(idx, acc)| {
            let mean_end = acc.end.mean[0];
            EpochAggregate {
                epoch: idx as u32 + 1,
                runs: acc.regret.n[0] as usize,
                mean_end,
                mean_regret: acc.regret.mean[0],
                stderr_regret: acc.regret.stderr(0),
                verify_success_rate: (acc.verified > 0)
                    .then(|| acc.verify_successes as f64 / acc.verified as f64),
                optimal_rate: (acc.exploited > 0)
                    .then(|| acc.optimal as f64 / acc.exploited as f64),
                bound: theoretical_bound(&resolved.params, mean_end.round() as u64),
            }
        })
        .collect();

    Ok(SweepResult {
        seeds: seeds.to_vec(),
        resolved,
        mean,
        stderr,
        epochs,
        diagnostics,
        totals,
        stage_means,
    })
}
