use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic in {path}: expected \"OTEN\"")]
    BadMagic { path: PathBuf },

    #[error("unsupported OTEN version {version} in {path}")]
    UnsupportedVersion { path: PathBuf, version: u8 },

    #[error("unknown dtype byte {dtype} in {path}")]
    UnknownDtype { path: PathBuf, dtype: u8 },

    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("semiseparable oracle is only defined for a constant gate")]
    UnsupportedOracle,

    #[error("model is not linear: superposition residual {residual:e} exceeds {tolerance:e}")]
    NotLinear { residual: f64, tolerance: f64 },

    #[error("isotropy score undefined for a map with zero off-center mass")]
    ZeroMass,

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
