use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] surgbench_core::Error),

    #[error(transparent)]
    Policy(#[from] surgbench_policies::Error),

    #[error("{0}")]
    Protocol(String),

    #[error("cannot write {path}: {msg}")]
    Output { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
