use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degree {degree} exceeds the configured cap {cap}")]
    DegreeCap { degree: usize, cap: usize },
    #[error("invalid degree {0}: expected an even integer >= 2")]
    InvalidDegree(usize),
    #[error("unsupported polynomial: {0}")]
    UnsupportedPolynomial(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
    #[error("quadrature did not converge: achieved {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },
    #[error("simulation failed: leading minor {minor} of the covariance matrix is not positive")]
    NotPositiveDefinite { minor: usize },
    #[error("window [{start}, {end}) exceeds path length {len}")]
    Bounds { start: usize, end: usize, len: usize },
    #[error("divergent series: {0}")]
    Divergence(String),
    #[error("observed value {observed} outside the admissible range ({lo}, {hi})")]
    Range { observed: f64, lo: f64, hi: f64 },
    #[error("inversion failed after {iterations} iterations, residual {residual:e}")]
    Inversion { iterations: usize, residual: f64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DegreeCap { .. }
                | Error::InvalidDegree(_)
                | Error::UnsupportedPolynomial(_)
                | Error::InvalidParameter(_)
                | Error::DegenerateParameters(_)
                | Error::UnsupportedRegime(_)
                | Error::Bounds { .. }
                | Error::Range { .. }
                | Error::Argument(_)
                | Error::Io(_)
                | Error::Parse(_)
        )
    }
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

pub type Result<T> = std::result::Result<T, Error>;
