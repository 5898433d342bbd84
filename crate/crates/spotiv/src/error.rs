use thiserror::Error;

/// Failure modes surfaced by the estimation pipeline.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("n too small: need at least p + 2 = {min} rows, got {n}")]
    TooFewRows { n: usize, min: usize },
    #[error("outcome not in {{0,1}}: found {0} at row {1}")]
    OutcomeNotBinary(f64, usize),
    #[error("single-class outcome: all y equal {0}")]
    SingleClass(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("rank-deficient design: condition number {0:.3e} exceeds 1e12")]
    RankDeficientDesign(f64),
    #[error("no relevant instruments: selection produced an empty set")]
    NoRelevantInstruments,
    #[error("degenerate slicing: {distinct} distinct outcome values for {slices} slices")]
    DegenerateSlicing { distinct: usize, slices: usize },
    #[error("bandwidth too small at evaluation point: every kernel denominator is zero")]
    BandwidthTooSmall,
    #[error("bootstrap failed: {kept} of {want} resamples succeeded after {attempts} attempts")]
    BootstrapFailed {
        kept: usize,
        want: usize,
        attempts: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("too many replication failures: {failed} of {reps} exceeded the 5% budget")]
    TooManyFailures { failed: usize, reps: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
