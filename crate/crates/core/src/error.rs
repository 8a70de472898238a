use thiserror::Error;

/// Errors raised by the fitting and evaluation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("point {value} lies outside the domain [{lower}, {upper}]")]
    OutOfDomain { value: f64, lower: f64, upper: f64 },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})")]
    NotPositiveSemidefinite {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("degenerate scale: {0} has zero median absolute deviation")]
    DegenerateScale(&'static str),

    #[error("efficiency factor undefined: every residual lies beyond the tuning constant")]
    UndefinedEfficiency,

    #[error("breakdown: {0}")]
    Breakdown(String),

    #[error("too few observations: need at least {needed}, found {found}")]
    TooFewObservations { needed: usize, found: usize },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs' shape.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient(_)
                | Error::NotPositiveSemidefinite { .. }
                | Error::DegenerateScale(_)
                | Error::UndefinedEfficiency
                | Error::Breakdown(_)
                | Error::TooFewObservations { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
