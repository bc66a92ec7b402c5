//! Simulator and building blocks for decentralized multi-user bandits with
//! user-dependent channel means.
//!
//! `K` users share `M` channels. A channel picked by two or more users in
//! the same step pays every one of them zero, and that zero is the only
//! signal users ever exchange. The protocol in [`protocol`] uses it to
//! assign distinct IDs, ship quantized reward estimates between users
//! ([`codec`]), agree on an optimal user-channel matching ([`assignment`])
//! and exploit it for exponentially growing stretches. [`harness`] runs the
//! agents against a stochastic [`env::Environment`] and accounts for regret.

pub mod assignment;
pub mod codec;
pub mod env;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod protocol;

pub use assignment::{
    canonical_choice, filter_by_pin, gap_oracle, optimal_set_from_quantized, system_reward,
    GapResult, Matching,
};
pub use codec::{decode_value, encode_value, required_rounds, QuantizedMatrix};
pub use env::{ChannelModel, Environment, RewardDist, StepOutcome};
pub use error::{Error, Result};
pub use harness::{
    fixing_trial, log_shape, run_episode, run_sweep, theoretical_bound, DeltaSpec, DiagnosticStats,
    Episode, EpochAggregate, EpochDiagnostics, Horizon, LogShape, RegretTrace, ResolvedRun,
    RunConfig, StageTotals, SweepResult,
};
pub use matrix::MeanMatrix;
pub use protocol::{Agent, ParamOverrides, Phase, ProtocolParams, TiebreakMode};
