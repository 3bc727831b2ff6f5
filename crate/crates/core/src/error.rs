use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("state {at:?} (t = {t}) is outside the domain of `{field}`")]
    OutsideDomain { field: String, at: Vec<f64>, t: f64 },

    #[error("finite-difference stencil for `{field}` leaves its domain at {at:?}")]
    StencilOutsideDomain { field: String, at: Vec<f64> },

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error("unknown transform `{0}`")]
    UnknownTransform(String),

    #[error("unknown reduction `{0}`")]
    UnknownReduction(String),

    #[error("unknown parameter `{name}` for system `{system}`")]
    UnknownParameter { system: String, name: String },

    #[error("{system}: constraint violated: {constraint} required")]
    ConstraintViolated { system: String, constraint: String },

    #[error("invalid level values: {0}")]
    InvalidLevels(String),

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("time {t} is outside the domain of transform `{transform}`")]
    TransformDomain { transform: String, t: f64 },

    #[error("Lyapunov frame collapsed at t = {t}")]
    CollapsedFrame { t: f64 },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
