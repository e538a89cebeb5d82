use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("episode is over: step {step} reached horizon {horizon}")]
    EpisodeOver { step: u32, horizon: u32 },

    #[error("point cloud is empty after masking")]
    EmptyCloud,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset error at {path}: {msg}")]
    Dataset { path: PathBuf, msg: String },

    #[error("expert collection aborted: {0}")]
    Collection(String),

    #[error("policy error: {0}")]
    Policy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("toml parse error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("toml serialize error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn dataset(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Dataset {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
