use std::path::PathBuf;

/// Errors produced by the estimators, the training loop and the experiment front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown random stream `{0}`")]
    UnknownStream(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error(
        "runaway rejection at t={t}, particle={particle}: no acceptance after {cap} trials (log M = {log_m})"
    )]
    RunawayRejection {
        t: usize,
        particle: usize,
        log_m: f64,
        cap: u64,
    },

    #[error("runaway Bernoulli race at t={t}: no winner after {cap} iterations")]
    RunawayRace { t: usize, cap: u64 },

    #[error("degenerate weights at t={t}: every particle weight is zero or non-finite")]
    DegenerateWeights { t: usize },

    #[error("innovation covariance is not positive definite at t={t}")]
    NotPositiveDefinite { t: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("oracle integrity: {0}")]
    OracleIntegrity(String),

    #[error("non-finite gradient at epoch {epoch}")]
    NonFiniteGradient { epoch: usize },

    #[error("replication {replication}: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
