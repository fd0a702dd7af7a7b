use std::path::PathBuf;

use thiserror::Error;

use crate::net::LinkId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    Network(String),

    #[error("split {split} s outside [{lower}, {upper}]")]
    SplitOutOfBounds { split: u32, lower: u32, upper: u32 },

    #[error("infeasible signal constants: {0}")]
    InfeasibleConstants(String),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown link {0}")]
    UnknownLink(LinkId),

    #[error("link {0} is not observed")]
    UnobservedLink(LinkId),

    #[error("episode finished; call reset first")]
    EpisodeFinished,

    #[error("episode not started; call reset first")]
    NotReset,

    #[error("queue recorder: {0}")]
    Recorder(String),

    #[error("learner diverged: {0}")]
    Divergence(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error("connection: {0}")]
    Connection(#[source] std::io::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (config, usage) rather than
    /// a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Usage(_)
                | Error::Parse { .. }
                | Error::Network(_)
                | Error::SplitOutOfBounds { .. }
                | Error::InfeasibleConstants(_)
        )
    }
}
