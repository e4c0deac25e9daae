use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid size {0} must be a power of two and at least 64")]
    InvalidGridSize(usize),
    #[error("frequency span must be positive and finite, got {0} Hz")]
    NonPositiveSpan(f64),
    #[error("carrier {carrier} Hz must exceed the grid span {span} Hz")]
    CarrierBelowSpan { carrier: f64, span: f64 },
    #[error("amplitude length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("states or operators live on different grids")]
    GridMismatch,
    #[error("non-finite amplitude at sample {0}")]
    NonFinite(usize),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("negative value where a nonnegative one is required: {0}")]
    Negative(f64),
    #[error("profile maximum lies on the axis edge, width not resolvable")]
    MaxOnEdge,
    #[error("coherence exceeds window: |g1| never drops below 1/e")]
    CoherenceExceedsWindow,
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("grid too narrow for the source: truncated tail mass {0:e} >= 1e-4")]
    GridTooNarrow(f64),
    #[error("transmission magnitude {magnitude} exceeds 1 at sample {index}")]
    TransmissionExceedsUnity { index: usize, magnitude: f64 },
    #[error("empty channel: transmitted probability {0:e} below threshold")]
    EmptyChannel(f64),
    #[error("invalid spectrometer: {0}")]
    InvalidSpectrometer(String),
    #[error("partition of unity violated by {0:e}")]
    PartitionViolated(f64),
    #[error("window overflow: {0}")]
    WindowOverflow(String),
    #[error("non-diagonal element in chain: {0}")]
    NonDiagonal(&'static str),
    #[error("insufficient clicks: {got} < {need}")]
    InsufficientClicks { got: usize, need: usize },
    #[error("insufficient counts: {got} < {need}")]
    InsufficientCounts { got: u64, need: u64 },
    #[error("need at least 3 usable channels, got {0}")]
    TooFewChannels(usize),
    #[error("degenerate regression design: {0}")]
    DegenerateDesign(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("delayed-choice configurations differ in more than element order")]
    NotAnOrderingPair,
}

impl Error {
    /// Guards that fire because the numerical representation cannot hold the
    /// physics (as opposed to malformed input).
    pub fn is_numerical_guard(&self) -> bool {
        matches!(
            self,
            Error::WindowOverflow(_) | Error::CoherenceExceedsWindow
        )
    }
}
