use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty scale set: no admissible extent has at least {min_size} grid points (grid holds {total})")]
    EmptyScaleSet { min_size: usize, total: usize },

    #[error("region is empty: no grid point falls inside the continuum box")]
    EmptyRegion,

    #[error("extent {extent:?} does not fit in a grid of side {n}")]
    ExtentTooLarge { extent: Vec<usize>, n: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("calibration mismatch: {0}")]
    CalibrationMismatch(String),

    #[error("resource budget exceeded: {0}")]
    Budget(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
