use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("graph is disconnected ({zero_modes} zero Laplacian eigenvalues)")]
    Disconnected { zero_modes: usize },

    #[error("no connected graph drawn after {0} attempts")]
    Generation(usize),

    #[error("state-space assembly: {0}")]
    Assembly(String),

    #[error("matrix is not Hurwitz (largest eigenvalue real part {max_real:e})")]
    NotHurwitz { max_real: f64 },

    #[error("mode {mode} (lambda = {lambda}) is not asymptotically stable")]
    UnstableMode { mode: usize, lambda: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("tuning: {0}")]
    Tuning(String),

    #[error("step size dt = {dt} is unstable for this system; use dt < {bound:.6e}")]
    StepSize { dt: f64, bound: f64 },

    #[error("system has marginal modes (DAPI with gamma = 0); refusing to simulate")]
    MarginalModes,

    #[error("{0} did not converge")]
    Convergence(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("grid point {index} ({value}): {source}")]
    GridPoint {
        index: usize,
        value: f64,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Validation(msg()))
    }
}
