use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("value {0} is outside [0, 1]")]
    ValueOutOfRange(f64),

    #[error("radix must be at least 2, got {0}")]
    InvalidRadix(u32),

    #[error("round count must be at least 1")]
    InvalidRounds,

    #[error("digit {digit} is outside 1..={radix}")]
    InvalidDigit { digit: u32, radix: u32 },

    #[error("gap must satisfy 0 < delta < 1, got {0}")]
    InvalidDelta(f64),

    #[error(
        "quantization with radix {radix} and {rounds} rounds does not fit in 128-bit arithmetic"
    )]
    PrecisionOverflow { radix: u32, rounds: u32 },

    #[error("all matchings have the same system reward; the gap is undefined")]
    DegenerateMatrix,

    #[error("instance with {k} users and {m} channels exceeds the search cap of {cap} channels")]
    SizeLimit { k: usize, m: usize, cap: usize },

    #[error("more than {0} optimal matchings")]
    OptimalSetTooLarge(usize),

    #[error("matching set is empty")]
    EmptySet,

    #[error("no matching in the set assigns channel {channel} to slot {slot}")]
    EmptyAfterFilter { slot: usize, channel: usize },

    #[error("invalid matching: {0}")]
    InvalidMatching(String),

    #[error("action {action} is outside 1..={m}")]
    ActionOutOfRange { action: usize, m: usize },

    #[error("invalid reward distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
