use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("grid: {0}")]
    Grid(String),
    #[error("photon fully rejected by filter (transmitted fraction {0:.3e})")]
    PhotonRejected(f64),
    #[error("heralding efficiency underflow ({0:.3e})")]
    EfficiencyUnderflow(f64),
    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("malformed tag data at byte {offset}: {msg}")]
    Parse { offset: u64, msg: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("fit did not converge after {iterations} iterations (chi2/dof {chi2_red:.4}): {msg}")]
    FitNonConvergence {
        iterations: usize,
        chi2_red: f64,
        msg: String,
    },
    #[error("fit rejected: {0}")]
    FitRejected(String),
    #[error("sampling: {0}")]
    Sampling(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 1 validation, 2 I/O, 3 fit failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Parse { .. } => 2,
            Error::FitNonConvergence { .. } | Error::FitRejected(_) => 3,
            _ => 1,
        }
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
