//! Per-user protocol: epochs of fixing, verification, round-robin
//! exploration, collision-coded exchange of estimates, tie-breaking and
//! exploitation.

mod agent;
mod schedule;

pub use agent::{Agent, AgentEvent, FaultKind, Phase, Stage};
pub use schedule::{offset_scan_channel, EpochSchedule};

use serde::{Deserialize, Serialize};

use crate::assignment::MAX_CHANNELS;
use crate::codec::required_rounds;
use crate::error::{Error, Result};

/// How agents agree on one member of a multi-element optimal set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiebreakMode {
    /// Leaders announce their channel one after another.
    #[default]
    Protocol,
    /// Everyone takes the canonical choice without signaling.
    Deterministic,
}

/// Common-knowledge parameters shared by every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub k: usize,
    pub m: usize,
    /// Known lower bound on the gap.
    pub delta: f64,
    /// Length of the fixing phase.
    pub t_fix: u64,
    /// Samples per channel per exploration phase.
    pub gamma: u64,
    /// Digits per transmitted estimate.
    pub rounds: u32,
    pub tiebreak_mode: TiebreakMode,
}

/// Optional replacements for the derived parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamOverrides {
    pub t_fix: Option<u64>,
    pub gamma: Option<u64>,
    pub rounds: Option<u32>,
}

/// `ceil(m * ln(20 k))`.
pub fn default_t_fix(k: usize, m: usize) -> u64 {
    (m as f64 * (20.0 * k as f64).ln()).ceil() as u64
}

/// `ceil(1 / (2 delta^2))`.
pub fn default_gamma(delta: f64) -> u64 {
    (1.0 / (2.0 * delta * delta)).ceil() as u64
}

impl ProtocolParams {
    pub fn new(k: usize, m: usize, delta: f64) -> Result<Self> {
        Self::with_overrides(
            k,
            m,
            delta,
            TiebreakMode::default(),
            ParamOverrides::default(),
        )
    }

    pub fn with_overrides(
        k: usize,
        m: usize,
        delta: f64,
        tiebreak_mode: TiebreakMode,
        overrides: ParamOverrides,
    ) -> Result<Self> {
        if k == 0 || k > m {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= k <= m, got k={k}, m={m}"
            )));
        }
        if m < 2 {
            return Err(Error::InvalidConfig("need at least two channels".into()));
        }
        if m > MAX_CHANNELS {
            return Err(Error::SizeLimit {
                k,
                m,
                cap: MAX_CHANNELS,
            });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidDelta(delta));
        }
        let params = Self {
            k,
            m,
            delta,
            t_fix: overrides.t_fix.unwrap_or_else(|| default_t_fix(k, m)),
            gamma: overrides.gamma.unwrap_or_else(|| default_gamma(delta)),
            rounds: match overrides.rounds {
                Some(r) => r,
                None => required_rounds(delta, m as u32)?,
            },
            tiebreak_mode,
        };
        if params.t_fix == 0 || params.gamma == 0 || params.rounds == 0 {
            return Err(Error::InvalidConfig(
                "t_fix, gamma and rounds must be at least 1".into(),
            ));
        }
        // make sure the codec can represent the requested precision
        crate::codec::decode_denominator(m as u32, params.rounds)?;
        Ok(params)
    }
}
