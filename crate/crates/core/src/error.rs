use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("orbit left the phase space at step {index}")]
    Escape { index: usize },

    #[error("non-finite state during integration at t = {time}")]
    Integration { time: f64 },

    #[error("system `{0}` has no inverse")]
    NoInverse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("perturbation size {size} rejected: {reason}")]
    PerturbationRejected { size: f64, reason: String },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("incompatible partitions: {0}")]
    IncompatiblePartitions(String),

    #[error("orbit escaped after {completed} of {requested} steps")]
    PartialMeasure { completed: usize, requested: usize },

    #[error("observable returned a non-finite value at step {index}")]
    NonFiniteObservable { index: usize },

    #[error("fewer than two surviving initial conditions ({survivors})")]
    InsufficientSurvivors { survivors: usize },

    #[error("degenerate frame: R-factor diagonal {value:e} at step {step}")]
    DegenerateFrame { step: usize, value: f64 },

    #[error("no dominated splitting detected (frame residual {residual:e})")]
    NoDomination { residual: f64 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("singular restriction of Df to the frame at {point:?}")]
    SingularPotential { point: Vec<f64> },

    #[error("splitting failed at {point:?}: {source}")]
    SplittingFailed {
        point: Vec<f64>,
        #[source]
        source: Box<LabError>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    /// Stable snake_case tag for structured error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Escape { .. } => "escape",
            LabError::Integration { .. } => "integration",
            LabError::NoInverse(_) => "no_inverse",
            LabError::InvalidArgument(_) => "invalid_argument",
            LabError::DimensionMismatch { .. } => "dimension_mismatch",
            LabError::PerturbationRejected { .. } => "perturbation_rejected",
            LabError::Construction(_) => "construction",
            LabError::IncompatiblePartitions(_) => "incompatible_partitions",
            LabError::PartialMeasure { .. } => "partial_measure",
            LabError::NonFiniteObservable { .. } => "non_finite_observable",
            LabError::InsufficientSurvivors { .. } => "insufficient_survivors",
            LabError::DegenerateFrame { .. } => "degenerate_frame",
            LabError::NoDomination { .. } => "no_domination",
            LabError::LengthMismatch(_) => "length_mismatch",
            LabError::SingularPotential { .. } => "singular_potential",
            LabError::SplittingFailed { .. } => "splitting_failed",
            LabError::Config(_) => "config",
            LabError::Io(_) => "io",
        }
    }
}
