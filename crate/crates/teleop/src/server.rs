//! WebSocket transport: one active client at a time, lockstep stepping.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use tungstenite::protocol::frame::coding::CloseCode;
use tungstenite::protocol::CloseFrame;
use tungstenite::{accept, Message, WebSocket};

use crate::error::Result;
use crate::protocol::{ErrorCode, ServerMessage};
use crate::session::{Session, SessionConfig};

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMessage) -> tungstenite::Result<()> {
    ws.send(Message::text(msg.to_json()))
}

fn refuse(stream: TcpStream) {
    if let Ok(mut ws) = accept(stream) {
        let _ = send(
            &mut ws,
            &ServerMessage::error(ErrorCode::Busy, "another client is connected"),
        );
        let _ = ws.close(Some(CloseFrame {
            code: CloseCode::Again,
            reason: "session busy".into(),
        }));
        let _ = ws.flush();
    }
}

fn run_session(stream: TcpStream, mut session: Session) -> Result<()> {
    let mut ws = accept(stream)?;
    loop {
        let text = match ws.read() {
            Ok(Message::Text(t)) => t,
            Ok(Message::Close(_)) => break,
            Ok(Message::Binary(_)) => {
                send(
                    &mut ws,
                    &ServerMessage::error(ErrorCode::BadMessage, "binary frames are not accepted"),
                )?;
                continue;
            }
            Ok(_) => continue,
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(e.into()),
        };
        for reply in session.handle_text(text.as_str()) {
            send(&mut ws, &reply)?;
        }
    }
    Ok(())
}

/// Accept clients until `stop` is set. A client connecting while another is
/// active gets a `busy` error and a close frame.
pub fn serve(listener: TcpListener, config: SessionConfig, stop: Arc<AtomicBool>) -> Result<()> {
    let busy = Arc::new(AtomicBool::new(false));
    let ids = AtomicU64::new(1);
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                eprintln!("teleop: accept failed: {e}");
                continue;
            }
        };
        if busy.swap(true, Ordering::SeqCst) {
            refuse(stream);
            continue;
        }
        let session = Session::new(ids.fetch_add(1, Ordering::SeqCst), config.clone())?;
        let busy = busy.clone();
        thread::spawn(move || {
            if let Err(e) = run_session(stream, session) {
                eprintln!("teleop: session ended with error: {e}");
            }
            busy.store(false, Ordering::SeqCst);
        });
    }
    Ok(())
}

/// A server running on a background thread.
pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<()>>>,
}

impl ServerHandle {
    pub fn shutdown(mut self) -> Result<()> {
        self.stop_now()
    }

    fn stop_now(&mut self) -> Result<()> {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        match self.thread.take() {
            Some(t) => t.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_now();
    }
}

pub fn spawn(addr: &str, config: SessionConfig) -> Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let thread = thread::spawn(move || serve(listener, config, flag));
    Ok(ServerHandle {
        addr,
        stop,
        thread: Some(thread),
    })
}
