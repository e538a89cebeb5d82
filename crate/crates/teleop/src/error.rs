#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] surgbench_core::Error),

    #[error("websocket: {0}")]
    WebSocket(#[from] tungstenite::Error),

    #[error("websocket handshake failed: {0}")]
    Handshake(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl<R: tungstenite::handshake::HandshakeRole> From<tungstenite::HandshakeError<R>> for Error {
    fn from(e: tungstenite::HandshakeError<R>) -> Self {
        Error::Handshake(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
