//! Single-session WebSocket server stepping the world at a fixed tick.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use super::protocol::ServerMessage;
use super::session::{Session, SessionConfig};
use crate::error::{Error, Result};
use crate::sim::Simulator;

pub const TICK_HZ: f64 = 15.0;
const SPAWNS_PER_CONNECTION: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub session: SessionConfig,
    pub tick_hz: f64,
}

impl ServerConfig {
    pub fn new(session: SessionConfig) -> Self {
        Self { session, tick_hz: TICK_HZ }
    }
}

/// Running server; dropping it does not stop it, call [`ServerHandle::stop`].
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    join: JoinHandle<()>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = self.join.join();
    }

    /// Blocks until the accept loop exits.
    pub fn wait(self) {
        let _ = self.join.join();
    }
}

struct Shared {
    sim: Arc<Simulator>,
    cfg: ServerConfig,
    shutdown: Arc<AtomicBool>,
    busy: AtomicBool,
    connections: AtomicU64,
}

fn io_err(addr: &str, source: std::io::Error) -> Error {
    Error::Io {
        path: addr.into(),
        source,
    }
}

/// Accepts operator connections on `listener` in a background thread. One
/// session at a time; further clients get a `busy` error and are closed.
pub fn serve(sim: Arc<Simulator>, listener: TcpListener, cfg: ServerConfig) -> Result<ServerHandle> {
    cfg.session.spec.validate()?;
    if !(cfg.tick_hz > 0.0) {
        return Err(Error::Config(format!("tick rate must be positive, got {}", cfg.tick_hz)));
    }
    let addr = listener.local_addr().map_err(|e| io_err("listener", e))?;
    listener.set_nonblocking(true).map_err(|e| io_err("listener", e))?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let shared = Arc::new(Shared {
        sim,
        cfg,
        shutdown: shutdown.clone(),
        busy: AtomicBool::new(false),
        connections: AtomicU64::new(0),
    });
    let join = std::thread::spawn(move || accept_loop(&listener, &shared));
    log::info!("teleop server listening on {addr}");
    Ok(ServerHandle { addr, shutdown, join })
}

fn accept_loop(listener: &TcpListener, shared: &Arc<Shared>) {
    let mut workers: Vec<JoinHandle<()>> = Vec::new();
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let _ = stream.set_nonblocking(false);
                let sh = shared.clone();
                if shared.busy.swap(true, Ordering::SeqCst) {
                    log::info!("refusing second client {peer}");
                    workers.push(std::thread::spawn(move || refuse(stream)));
                } else {
                    workers.push(std::thread::spawn(move || {
                        if let Err(e) = run_connection(stream, &sh) {
                            log::warn!("teleop session with {peer} ended: {e}");
                        }
                        sh.busy.store(false, Ordering::SeqCst);
                    }));
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => log::warn!("accept failed: {e}"),
        }
        workers.retain(|w| !w.is_finished());
    }
    for w in workers {
        let _ = w.join();
    }
}

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMessage, seq: &mut u64) -> Result<()> {
    *seq += 1;
    ws.send(Message::text(msg.to_line(*seq)))
        .map_err(|e| Error::Protocol(format!("send failed: {e}")))
}

fn refuse(stream: TcpStream) {
    let Ok(mut ws) = tungstenite::accept(stream) else { return };
    let busy = ServerMessage::Error {
        kind: "busy".into(),
        message: "another operator session is active".into(),
        in_reply_to: None,
    };
    let _ = send(&mut ws, &busy, &mut 0);
    let _ = ws.close(None);
    let _ = ws.flush();
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn run_connection(stream: TcpStream, shared: &Shared) -> Result<()> {
    stream
        .set_write_timeout(Some(Duration::from_millis(200)))
        .map_err(|e| io_err("stream", e))?;
    let mut ws = tungstenite::accept(stream).map_err(|e| Error::Protocol(format!("handshake: {e}")))?;
    let mut cfg = shared.cfg.session.clone();
    let n = shared.connections.fetch_add(1, Ordering::SeqCst);
    cfg.first_spawn += n * SPAWNS_PER_CONNECTION;
    let mut session = Session::new(shared.sim.clone(), cfg)?;
    let period = Duration::from_secs_f64(1.0 / shared.cfg.tick_hz);
    let mut next = Instant::now() + period;
    let mut seq = 0u64;
    send(&mut ws, &session.snapshot(), &mut seq)?;
    loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            session.disconnect();
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        let now = Instant::now();
        if now >= next {
            if let Err(e) = session.tick() {
                send(&mut ws, &ServerMessage::error(&e, None), &mut seq)?;
            }
            if let Err(e) = send(&mut ws, &session.snapshot(), &mut seq) {
                session.disconnect();
                return Err(e);
            }
            next += period;
            if next < now {
                next = now + period;
            }
            continue;
        }
        let wait = (next - now).max(Duration::from_millis(1));
        ws.get_ref().set_read_timeout(Some(wait)).map_err(|e| io_err("stream", e))?;
        match ws.read() {
            Ok(Message::Text(text)) => {
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    for reply in session.handle_line(line) {
                        send(&mut ws, &reply, &mut seq)?;
                    }
                }
            }
            Ok(Message::Close(_)) => {
                session.disconnect();
                return Ok(());
            }
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(e) => {
                session.disconnect();
                return Err(Error::Protocol(format!("connection lost: {e}")));
            }
        }
    }
}
