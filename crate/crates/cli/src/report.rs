//! CSV traces and JSON summaries.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use mumab_core::assignment::Matching;
use mumab_core::{
    log_shape, theoretical_bound, Episode, EpochAggregate, EpochDiagnostics, GapResult, LogShape,
    ProtocolParams, RegretTrace, StageTotals, SweepResult,
};
use serde::{Deserialize, Serialize};

use crate::config::ConfigFile;
use crate::error::{CliError, Result};

pub const TRACE_HEADER: [&str; 6] = [
    "t",
    "epoch",
    "phase",
    "instant_regret",
    "cum_regret",
    "collisions",
];
pub const CURVE_HEADER: [&str; 3] = ["t", "mean", "stderr"];

/// Epoch from which the log-shape fit starts.
pub const FIT_MIN_EPOCH: u32 = 4;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Validation(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_trace(path: &Path, trace: &RegretTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(TRACE_HEADER).map_err(|e| csv_err(path, e))?;
    for (i, s) in trace.steps.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            s.epoch.to_string(),
            s.phase.as_str().to_string(),
            s.instant.to_string(),
            s.cumulative.to_string(),
            s.collisions.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_curve(path: &Path, mean: &[f64], stderr: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(CURVE_HEADER).map_err(|e| csv_err(path, e))?;
    for (i, (m, s)) in mean.iter().zip(stderr).enumerate() {
        w.write_record([(i + 1).to_string(), m.to_string(), s.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub j1: f64,
    pub j2: f64,
    pub delta: f64,
    pub optimal_set: Vec<Matching>,
}

impl From<&GapResult> for OracleReport {
    fn from(g: &GapResult) -> Self {
        Self {
            j1: g.j1,
            j2: g.j2,
            delta: g.delta,
            optimal_set: g.optimal_set.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub exploration: f64,
    pub matching: f64,
    pub exploitation: f64,
    pub total: f64,
}

impl RegretReport {
    fn new(s: &StageTotals, total: f64) -> Self {
        Self {
            exploration: s.exploration,
            matching: s.matching,
            exploitation: s.exploitation,
            total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixingReport {
    pub attempts: u32,
    pub successes: u32,
    pub success_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub config: ConfigFile,
    pub seed: u64,
    pub params: ProtocolParams,
    pub oracle: OracleReport,
    pub warnings: Vec<String>,
    pub steps: u64,
    /// First epoch whose verification confirmed distinct IDs.
    pub global_fix_epoch: Option<u32>,
    pub fixing: FixingReport,
    pub regret: RegretReport,
    pub bound_at_end: f64,
    pub fault_detected: bool,
    pub fault_count: u32,
    pub epochs: Vec<EpochDiagnostics>,
}

impl RunSummary {
    pub fn new(config: &ConfigFile, ep: &Episode) -> Self {
        let d = &ep.diagnostics;
        Self {
            command: "run".into(),
            config: config.clone(),
            seed: ep.seed,
            params: ep.resolved.params.clone(),
            oracle: (&ep.resolved.gap).into(),
            warnings: ep.resolved.warnings.clone(),
            steps: ep.trace.len(),
            global_fix_epoch: d.global_fix_epoch,
            fixing: FixingReport {
                attempts: d.fixing_attempts,
                successes: d.fixing_successes,
                success_rate: d.fixing_success_rate(),
            },
            regret: RegretReport::new(&ep.trace.stages, ep.trace.total()),
            bound_at_end: theoretical_bound(&ep.resolved.params, ep.trace.len()),
            fault_detected: d.fault_count > 0,
            fault_count: d.fault_count,
            epochs: d.epochs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub steps: u64,
    pub total_regret: f64,
    pub global_fix_epoch: Option<u32>,
    pub fault_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub command: String,
    pub config: ConfigFile,
    pub seeds: Vec<u64>,
    pub params: ProtocolParams,
    pub oracle: OracleReport,
    pub warnings: Vec<String>,
    /// Length of the averaged curve (the shortest run).
    pub steps: usize,
    pub fixing: FixingReport,
    /// Mean over seeds.
    pub regret: RegretReport,
    pub total_regret_stderr: f64,
    pub fault_detected: bool,
    pub fault_count: u32,
    /// Epoch-boundary aggregates, with the closed-form bound at each.
    pub epochs: Vec<EpochAggregate>,
    /// Affine fit of mean boundary regret against the epoch index.
    pub log_shape: Option<LogShape>,
    /// Mean regret stays under the bound at every boundary.
    pub bound_dominates_mean: bool,
    /// Every seed stays under the bound at every boundary it completed.
    pub bound_dominates_every_run: bool,
    pub runs: Vec<SeedSummary>,
}

impl SweepSummary {
    pub fn new(config: &ConfigFile, s: &SweepResult) -> Self {
        let params = &s.resolved.params;
        let n = s.totals.len() as f64;
        let mean_total = s.totals.iter().sum::<f64>() / n;
        let var = if s.totals.len() > 1 {
            s.totals
                .iter()
                .map(|t| (t - mean_total).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        let every_run = s.diagnostics.iter().all(|d| {
            d.completed_epochs()
                .all(|e| e.cum_regret <= theoretical_bound(params, e.end))
        });
        let runs = s
            .seeds
            .iter()
            .zip(&s.diagnostics)
            .zip(&s.totals)
            .map(|((&seed, d), &total)| SeedSummary {
                seed,
                steps: d.epochs.last().map_or(0, |e| e.end),
                total_regret: total,
                global_fix_epoch: d.global_fix_epoch,
                fault_count: d.fault_count,
            })
            .collect();
        Self {
            command: "sweep".into(),
            config: config.clone(),
            seeds: s.seeds.clone(),
            params: params.clone(),
            oracle: (&s.resolved.gap).into(),
            warnings: s.resolved.warnings.clone(),
            steps: s.mean.len(),
            fixing: FixingReport {
                attempts: s.fixing_attempts(),
                successes: s.fixing_successes(),
                success_rate: s.fixing_success_rate(),
            },
            regret: RegretReport::new(&s.stage_means, mean_total),
            total_regret_stderr: (var / n).sqrt(),
            fault_detected: s.fault_count() > 0,
            fault_count: s.fault_count(),
            epochs: s.epochs.clone(),
            log_shape: log_shape(&s.boundary_points(), FIT_MIN_EPOCH),
            bound_dominates_mean: s.epochs.iter().all(|e| e.mean_regret <= e.bound),
            bound_dominates_every_run: every_run,
            runs,
        }
    }
}
