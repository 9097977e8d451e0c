use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("exponent p must satisfy p > 1, got {0}")]
    InvalidExponent(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "quadrature did not reach tolerance {tol:e}: value {value}, error estimate {error_estimate:e} after {panels} panels"
    )]
    QuadratureNotConverged {
        value: f64,
        error_estimate: f64,
        panels: usize,
        tol: f64,
    },

    #[error("target {target} is not bracketed by f({lo}) = {f_lo} and f({hi}) = {f_hi}")]
    NotBracketed {
        target: f64,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("(p, k) = ({p}, {k}) is not admissible: {reason}")]
    Inadmissible { p: f64, k: u32, reason: String },

    #[error("normalized p-Laplacian undefined at critical point {0:?}")]
    CriticalPoint(Vec<f64>),

    #[error("concavity condition vacuous on sample: all {0} points are critical")]
    VacuousCondition(usize),

    #[error("barrier search exhausted; least positive operator maximum found was {best_margin:e}")]
    BarrierExhausted { best_margin: f64 },

    #[error("boundary data below the obstacle at vertex {vertex} ({g} < {phi})")]
    IncompatibleBoundary { vertex: usize, g: f64, phi: f64 },

    #[error("every ring was entirely contact or entirely non-contact")]
    NoUsableRings,

    #[error("{0:?} is not a free boundary point")]
    NotOnFreeBoundary([f64; 2]),

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}
