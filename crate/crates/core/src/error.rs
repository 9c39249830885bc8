use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Bessel evaluation did not converge at x = {x} (normalization residual {residual:e})")]
    BesselNonConvergent { x: f64, residual: f64 },

    #[error("integrator step {dt} exceeds the stability limit {limit} for hop rate {hop_rate}")]
    StepPolicy { dt: f64, limit: f64, hop_rate: f64 },

    #[error("asymptotic form requested outside its regime (J_e t = {0} < 1)")]
    OutOfRegime(f64),

    #[error("{invalid} of {total} trajectories breached the lattice boundary")]
    TooManyInvalid { invalid: u64, total: u64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("series mismatch: {0}")]
    Series(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
