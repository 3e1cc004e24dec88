use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // frequency response data
    #[error("frequency grid: {0}")]
    InvalidGrid(String),
    #[error("unrecognized table header `{0}`")]
    UnknownHeader(String),
    #[error("frequency not strictly increasing at line {line}: {prev} Hz then {next} Hz")]
    NonMonotonicFrequency { line: usize, prev: f64, next: f64 },
    #[error("non-finite value at line {line}")]
    NonFiniteValue { line: usize },
    #[error("table contains no data rows")]
    EmptyTable,
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("{f_hz} Hz outside grid span [{lo}, {hi}] Hz")]
    OutOfRange { f_hz: f64, lo: f64, hi: f64 },
    #[error("frequency spans do not overlap")]
    DisjointSpans,
    #[error("zero-magnitude sample at {f_hz} Hz")]
    ZeroMagnitudeSample { f_hz: f64 },

    // impedance networks
    #[error("invalid network element: {0}")]
    InvalidNetwork(String),
    #[error("network singular at {f_hz} Hz")]
    SingularAtFrequency { f_hz: f64 },
    #[error("parallel combination is singular (Z1 + Z2 = 0)")]
    ResonanceSingular,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("fixture generation failed for seed {seed} after sub-seeds {sub_seeds:?}")]
    GenerationFailed { seed: u64, sub_seeds: Vec<u64> },

    // loop gain algebra
    #[error("frequency grids differ")]
    GridMismatch,
    #[error("zero denominator at {f_hz} Hz")]
    ZeroDenominator { f_hz: f64 },
    #[error("|1 + rho| vanishes at {f_hz} Hz")]
    SingularSensitivity { f_hz: f64 },

    // margins and regions
    #[error("value inconsistent with {0} crossover")]
    KindMismatch(&'static str),
    #[error("|L| = {magnitude} is not on the unit circle")]
    NotOnUnitCircle { magnitude: f64 },
    #[error("locus passes through -1+0j at {f_hz} Hz")]
    CriticalPointOnLocus { f_hz: f64 },
    #[error("winding number ambiguous (residual {residual})")]
    AmbiguousWinding { residual: f64 },
    #[error("network impedance magnitude must be positive, got {0}")]
    NonpositiveImpedanceMagnitude(f64),

    // reporting
    #[error("inconsistent report inputs: {0}")]
    InconsistentInputs(String),
    #[error("unsupported output format `{0}`")]
    UnsupportedFormat(String),
    #[error("report carries no curves to plot")]
    MissingCurves,
}
