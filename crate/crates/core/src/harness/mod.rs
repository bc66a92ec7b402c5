//! Lock-step simulation of all agents against one environment, with
//! pseudo-regret accounting and per-epoch diagnostics.

mod bound;
mod fit;
mod sweep;

pub use bound::{regret_constant, theoretical_bound};
pub use fit::{affine_fit, log_shape, AffineFit, LogShape};
pub use sweep::{run_sweep, EpochAggregate, SweepResult};

use serde::{Deserialize, Serialize};

use crate::assignment::{
    compare_rewards, gap_oracle, system_reward, GapResult, Matching, TIE_TOLERANCE,
};
use crate::codec::QuantizedMatrix;
use crate::env::{ChannelModel, Environment, RewardDist, StepOutcome};
use crate::error::{Error, Result};
use crate::matrix::MeanMatrix;
use crate::protocol::{
    Agent, AgentEvent, ParamOverrides, Phase, ProtocolParams, Stage, TiebreakMode,
};

/// Where agents get their gap parameter from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSpec {
    /// The true gap of the mean matrix.
    Oracle,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Stop after this many steps, truncating the last epoch.
    Steps(u64),
    /// Stop after this many complete epochs.
    Epochs(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ChannelModel,
    pub delta: DeltaSpec,
    pub tiebreak_mode: TiebreakMode,
    pub overrides: ParamOverrides,
    pub horizon: Horizon,
}

/// Parameters derived from a [`RunConfig`] before any step is taken.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedRun {
    pub params: ProtocolParams,
    pub gap: GapResult,
    pub warnings: Vec<String>,
}

impl RunConfig {
    pub fn new(model: ChannelModel, horizon: Horizon) -> Self {
        Self {
            model,
            delta: DeltaSpec::Oracle,
            tiebreak_mode: TiebreakMode::default(),
            overrides: ParamOverrides::default(),
            horizon,
        }
    }

    pub fn resolve(&self) -> Result<ResolvedRun> {
        let matrix = self.model.matrix();
        let gap = gap_oracle(matrix)?;
        let mut warnings = Vec::new();
        let delta = match self.delta {
            DeltaSpec::Oracle => gap.delta,
            DeltaSpec::Explicit(d) => {
                if d > gap.delta {
                    warnings.push(format!(
                        "explicit delta {d} exceeds the true gap {}; accuracy guarantees do not hold",
                        gap.delta
                    ));
                }
                d
            }
        };
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidDelta(delta));
        }
        if matrix.k() == matrix.m() {
            warnings.push(format!(
                "k equals m ({}); no channel is left free for users outside the matching",
                matrix.k()
            ));
        }
        if self.model.has_zero_atom() {
            warnings.push(
                "rewards can be zero without a collision; protocol guarantees are void".into(),
            );
        }
        match self.horizon {
            Horizon::Steps(0) | Horizon::Epochs(0) => {
                return Err(Error::InvalidConfig("horizon must be positive".into()))
            }
            Horizon::Epochs(l) if l > 40 => {
                return Err(Error::InvalidConfig(format!(
                    "{l} epochs would exceed any practical horizon"
                )))
            }
            _ => {}
        }
        let params = ProtocolParams::with_overrides(
            matrix.k(),
            matrix.m(),
            delta,
            self.tiebreak_mode,
            self.overrides,
        )?;
        Ok(ResolvedRun {
            params,
            gap,
            warnings,
        })
    }
}

/// One simulated step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub epoch: u32,
    pub phase: Phase,
    pub instant: f64,
    pub cumulative: f64,
    /// Users that collided in this step.
    pub collisions: u32,
}

/// Regret charged to each part of an epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTotals {
    /// Fixing, verification, exploration and the random part of failed epochs.
    pub exploration: f64,
    /// Communication and tie-breaking.
    pub matching: f64,
    /// Exploitation, including the exploitation-length tail of failed epochs.
    pub exploitation: f64,
}

impl StageTotals {
    pub fn sum(&self) -> f64 {
        self.exploration + self.matching + self.exploitation
    }

    fn add(&mut self, stage: Stage, v: f64) {
        match stage {
            Stage::Exploration => self.exploration += v,
            Stage::Matching => self.matching += v,
            Stage::Exploitation => self.exploitation += v,
        }
    }
}

/// Per-step pseudo-regret: `J1` minus the true means of users that did not
/// collide. Step `t` (1-based) is `steps[t - 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretTrace {
    pub steps: Vec<StepRecord>,
    pub stages: StageTotals,
}

impl RegretTrace {
    pub fn len(&self) -> u64 {
        self.steps.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cumulative)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochDiagnostics {
    pub epoch: u32,
    /// Steps completed before the epoch began.
    pub start: u64,
    /// Steps completed when the epoch ended (or the horizon cut it).
    pub end: u64,
    pub completed: bool,
    pub cum_regret: f64,
    /// Whether this epoch ran the fixing phase.
    pub fixing_ran: bool,
    /// Every user held an ID when fixing ended.
    pub fixing_success: Option<bool>,
    /// Verification verdict; `None` when verification was skipped.
    pub verdict: Option<bool>,
    pub verdicts_agree: bool,
    /// Largest `|decoded - true mean|` over the shared matrix.
    pub max_estimate_error: Option<f64>,
    pub matrices_agree: Option<bool>,
    pub matchings_agree: Option<bool>,
    /// Matrix shared in this epoch's communication phase.
    #[serde(skip)]
    pub quantized: Option<QuantizedMatrix>,
    /// Channel each user played in the first exploitation step.
    pub exploited: Option<Vec<usize>>,
    pub matching_optimal: Option<bool>,
    pub exploit_regret: f64,
    pub faults: u32,
}

impl EpochDiagnostics {
    fn new(epoch: u32, start: u64) -> Self {
        Self {
            epoch,
            start,
            end: start,
            completed: false,
            cum_regret: 0.0,
            fixing_ran: false,
            fixing_success: None,
            verdict: None,
            verdicts_agree: true,
            max_estimate_error: None,
            matrices_agree: None,
            matchings_agree: None,
            quantized: None,
            exploited: None,
            matching_optimal: None,
            exploit_regret: 0.0,
            faults: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticStats {
    pub epochs: Vec<EpochDiagnostics>,
    /// First epoch whose verification confirmed distinct IDs.
    pub global_fix_epoch: Option<u32>,
    pub fixing_attempts: u32,
    pub fixing_successes: u32,
    pub fault_count: u32,
}

impl DiagnosticStats {
    pub fn fixing_success_rate(&self) -> Option<f64> {
        (self.fixing_attempts > 0)
            .then(|| self.fixing_successes as f64 / self.fixing_attempts as f64)
    }

    pub fn completed_epochs(&self) -> impl Iterator<Item = &EpochDiagnostics> {
        self.epochs.iter().filter(|e| e.completed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub seed: u64,
    pub resolved: ResolvedRun,
    pub trace: RegretTrace,
    pub diagnostics: DiagnosticStats,
}

/// SplitMix64 finalizer; gives each agent and the environment its own seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-epoch bookkeeping fed from agent events.
struct EpochTracker {
    diag: EpochDiagnostics,
    matrix: Option<(Vec<usize>, QuantizedMatrix)>,
    settled: Option<Matching>,
}

impl EpochTracker {
    fn new(epoch: u32, start: u64) -> Self {
        Self {
            diag: EpochDiagnostics::new(epoch, start),
            matrix: None,
            settled: None,
        }
    }

    fn absorb(&mut self, event: AgentEvent, ids: &[Option<usize>], means: &MeanMatrix) {
        match event {
            AgentEvent::Fixed { .. } => {}
            AgentEvent::Verdict { all_fixed, .. } => match self.diag.verdict {
                None => self.diag.verdict = Some(all_fixed),
                Some(v) if v != all_fixed => self.diag.verdicts_agree = false,
                Some(_) => {}
            },
            AgentEvent::MatrixReceived {
                present, matrix, ..
            } => match &self.matrix {
                None => {
                    self.diag.max_estimate_error = estimate_error(&present, &matrix, ids, means);
                    self.diag.matrices_agree = Some(true);
                    self.diag.quantized = Some(matrix.clone());
                    self.matrix = Some((present, matrix));
                }
                Some((p, q)) => {
                    if *p != present || *q != matrix {
                        self.diag.matrices_agree = Some(false);
                    }
                }
            },
            AgentEvent::Settled { matching, .. } => match &self.settled {
                None => {
                    self.diag.matchings_agree = Some(true);
                    self.settled = Some(matching);
                }
                Some(s) => {
                    if *s != matching {
                        self.diag.matchings_agree = Some(false);
                    }
                }
            },
            AgentEvent::Fault { .. } => self.diag.faults += 1,
        }
    }
}

fn estimate_error(
    present: &[usize],
    matrix: &QuantizedMatrix,
    ids: &[Option<usize>],
    means: &MeanMatrix,
) -> Option<f64> {
    let mut worst: f64 = 0.0;
    for (row, id) in present.iter().enumerate() {
        let user = ids.iter().position(|i| *i == Some(*id))?;
        for c in 0..means.m() {
            worst = worst.max((matrix.value(row, c) - means.get(user, c)).abs());
        }
    }
    Some(worst)
}

/// Runs every agent and the environment in lock-step until the horizon.
///
/// Protocol faults are recorded in the diagnostics rather than returned as
/// errors. The result is a pure function of `config` and `seed`.
pub fn run_episode(config: &RunConfig, seed: u64) -> Result<Episode> {
    let resolved = config.resolve()?;
    let params = resolved.params.clone();
    let means = config.model.matrix().clone();
    let k = params.k;
    let j1 = resolved.gap.j1;

    let mut agents: Vec<Agent> = (0..k)
        .map(|j| Agent::new(params.clone(), derive_seed(seed, j as u64 + 1)))
        .collect();
    let mut env = Environment::new(config.model.clone(), derive_seed(seed, 0));

    let (max_steps, max_epochs) = match config.horizon {
        Horizon::Steps(t) => (t, u32::MAX),
        Horizon::Epochs(l) => (u64::MAX, l),
    };

    let mut trace = RegretTrace::default();
    if let Horizon::Steps(t) = config.horizon {
        trace.steps.reserve(t.min(1 << 24) as usize);
    }
    let mut stats = DiagnosticStats::default();
    let mut actions = vec![0usize; k];
    let mut outcome = StepOutcome::default();
    let mut ids: Vec<Option<usize>> = vec![None; k];
    let mut tracker = EpochTracker::new(1, 0);
    let mut cumulative = 0.0;
    let mut t: u64 = 0;

    while t < max_steps && agents[0].epoch() <= max_epochs {
        let lead = &agents[0];
        let epoch = lead.epoch();
        let phase = lead.phase();
        let stage = lead.stage();
        let phase_start = lead.phase_step() == 0;

        if phase == Phase::Fixing && phase_start {
            tracker.diag.fixing_ran = true;
        }
        if phase == Phase::Verify && phase_start {
            let success = agents.iter().all(|a| a.id().is_some());
            tracker.diag.fixing_success = Some(success);
            stats.fixing_attempts += 1;
            stats.fixing_successes += u32::from(success);
        }

        for (a, slot) in agents.iter_mut().zip(actions.iter_mut()) {
            *slot = a.act();
        }
        env.step_into(&actions, &mut outcome)?;

        if phase == Phase::Exploit && phase_start {
            tracker.diag.exploited = Some(actions.clone());
            tracker.diag.matching_optimal = Some(
                Matching::new(actions.clone())
                    .map(|mt| compare_rewards(system_reward(&means, &mt), j1).is_eq())
                    .unwrap_or(false),
            );
        }

        let achieved: f64 = actions
            .iter()
            .zip(&outcome.collided)
            .enumerate()
            .filter(|(_, (_, &c))| !c)
            .map(|(j, (&a, _))| means.get(j, a - 1))
            .sum();
        let mut instant = j1 - achieved;
        if instant.abs() <= TIE_TOLERANCE {
            instant = 0.0;
        }
        cumulative += instant;
        trace.stages.add(stage, instant);
        if phase == Phase::Exploit {
            tracker.diag.exploit_regret += instant;
        }
        trace.steps.push(StepRecord {
            epoch,
            phase,
            instant,
            cumulative,
            collisions: outcome.collisions() as u32,
        });

        for (j, a) in agents.iter_mut().enumerate() {
            a.observe(outcome.rewards[j]);
            ids[j] = a.id();
        }
        for a in agents.iter_mut() {
            if a.has_events() {
                let events: Vec<AgentEvent> = a.drain_events().collect();
                for e in events {
                    if let AgentEvent::Verdict {
                        all_fixed: true,
                        epoch,
                    } = e
                    {
                        stats.global_fix_epoch.get_or_insert(epoch);
                    }
                    tracker.absorb(e, &ids, &means);
                }
            }
        }
        t += 1;

        if agents[0].epoch() != epoch {
            tracker.diag.end = t;
            tracker.diag.completed = true;
            tracker.diag.cum_regret = cumulative;
            stats.fault_count += tracker.diag.faults;
            let next = EpochTracker::new(agents[0].epoch(), t);
            stats
                .epochs
                .push(std::mem::replace(&mut tracker, next).diag);
        }
    }
    if tracker.diag.start < t {
        tracker.diag.end = t;
        tracker.diag.cum_regret = cumulative;
        stats.fault_count += tracker.diag.faults;
        stats.epochs.push(tracker.diag);
    }

    Ok(Episode {
        seed,
        resolved,
        trace,
        diagnostics: stats,
    })
}

/// Runs only the fixing phase with `k` agents on `m` channels for `t_fix`
/// steps and reports whether every agent ended up with an ID.
pub fn fixing_trial(k: usize, m: usize, t_fix: u64, seed: u64) -> Result<bool> {
    let params = ProtocolParams::with_overrides(
        k,
        m,
        0.25,
        TiebreakMode::Deterministic,
        ParamOverrides {
            t_fix: Some(t_fix),
            ..Default::default()
        },
    )?;
    let means = MeanMatrix::new(k, m, vec![0.5; k * m])?;
    let model = ChannelModel::uniform_family(means, RewardDist::PointMass, false)?;
    let mut env = Environment::new(model, derive_seed(seed, 0));
    let mut agents: Vec<Agent> = (0..k)
        .map(|j| Agent::new(params.clone(), derive_seed(seed, j as u64 + 1)))
        .collect();
    let mut actions = vec![0; k];
    let mut outcome = StepOutcome::default();
    for _ in 0..t_fix {
        for (a, slot) in agents.iter_mut().zip(actions.iter_mut()) {
            *slot = a.act();
        }
        env.step_into(&actions, &mut outcome)?;
        for (a, &r) in agents.iter_mut().zip(&outcome.rewards) {
            a.observe(r);
        }
    }
    Ok(agents.iter().all(|a| a.id().is_some()))
}
