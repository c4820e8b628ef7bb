//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("latitude {0} rad outside [-pi/2, pi/2]")]
    LatitudeOutOfRange(f64),

    #[error("Kepler iteration did not converge after {iterations} iterations (e = {eccentricity})")]
    KeplerNonConvergence { iterations: usize, eccentricity: f64 },

    #[error("light-time iteration did not converge after {0} iterations")]
    LightTimeNonConvergence(usize),

    #[error("epoch {t} s outside ephemeris window [{start}, {end}] s (tolerance {tol} s)")]
    EphemerisWindow { t: f64, start: f64, end: f64, tol: f64 },

    #[error("rank-deficient fit: {0}")]
    RankDeficientFit(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
