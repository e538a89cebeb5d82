//! Live teleoperation over WebSocket: a client steers the arms one step at a
//! time, watches the scene, and records demonstrations into a dataset.

pub mod error;
pub mod protocol;
pub mod server;
pub mod session;

pub use error::{Error, Result};
pub use protocol::{
    encode_state_message, ClientMessage, ErrorCode, RecordCmd, RecordStatus, ServerMessage,
    StateMessage,
};
pub use server::{serve, spawn, ServerHandle};
pub use session::{Session, SessionConfig};
