use thiserror::Error;

/// Errors raised by the estimators and their supporting machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensiError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("no sample point carries kernel weight at x0 = {x0} (h = {h})")]
    NoLocalData { x0: f64, h: f64 },

    #[error("input {input}: {source}")]
    InInput {
        input: usize,
        #[source]
        source: Box<SensiError>,
    },

    #[error("no feasible bandwidth in grid; last failure at h = {h}, x0 = {x0}")]
    NoFeasibleBandwidth { h: f64, x0: f64 },

    #[error("bandwidth grid is empty")]
    EmptyGrid,

    #[error("invalid bandwidth grid: {0}")]
    InvalidGrid(String),

    #[error("kernel moment order {0} outside supported range 0..=7")]
    MomentOrder(u32),

    #[error("output sample has zero variance")]
    DegenerateOutput,

    #[error(
        "covariance matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})"
    )]
    InvalidCovariance { min_eigenvalue: f64 },

    #[error("denominator must be positive, got {0}")]
    NonPositiveDenominator(f64),
}

impl SensiError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SensiError::InvalidInput(msg.into())
    }

    pub(crate) fn in_input(self, input: usize) -> Self {
        match self {
            e @ SensiError::InInput { .. } => e,
            e => SensiError::InInput {
                input,
                source: Box::new(e),
            },
        }
    }

    /// Unwraps any `InInput` context layer.
    pub fn root(&self) -> &SensiError {
        match self {
            SensiError::InInput { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, SensiError>;
