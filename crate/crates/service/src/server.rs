//! TCP front end. One thread owns the [`Session`]; connection threads only
//! exchange messages with it over channels.

use std::collections::hash_map::RandomState;
use std::collections::BTreeMap;
use std::hash::BuildHasher;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{info, warn};
use tracebench::Result;

use crate::protocol::{read_frame, write_frame, CommandMessage, RecordAction, StreamMessage};
use crate::session::{Move, SavedEpisode, ServiceConfig, Session};

type ClientId = u64;

/// How long a new connection may stay silent before it is taken as a protocol client.
const SNIFF_WINDOW: Duration = Duration::from_millis(150);

#[derive(Clone)]
struct Outgoing {
    msg: StreamMessage,
    attachment: Option<Arc<Vec<u8>>>,
}

enum Event {
    Connected {
        id: ClientId,
        tx: Sender<Outgoing>,
        stream: TcpStream,
    },
    Command {
        id: ClientId,
        cmd: CommandMessage,
    },
    Malformed {
        id: ClientId,
        client_seq: Option<u64>,
        message: String,
    },
    Disconnected {
        id: ClientId,
    },
}

struct Client {
    tx: Sender<Outgoing>,
    stream: TcpStream,
}

#[derive(Default)]
struct Shared {
    shutdown: AtomicBool,
    ticks: AtomicU64,
    clients: AtomicUsize,
}

/// A running server. Dropping the handle does not stop it; call [`ServerHandle::stop`].
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    sim: JoinHandle<Option<SavedEpisode>>,
    accept: JoinHandle<()>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn ticks(&self) -> u64 {
        self.shared.ticks.load(Ordering::Relaxed)
    }

    /// A callback that asks the server to stop (safe to call from a signal handler thread).
    pub fn stopper(&self) -> impl Fn() + Send + Sync + 'static {
        let shared = Arc::clone(&self.shared);
        move || shared.shutdown.store(true, Ordering::SeqCst)
    }

    /// Blocks until the server stops. Returns the episode saved from a
    /// recording that was still running at shutdown.
    pub fn join(self) -> Option<SavedEpisode> {
        let saved = self.sim.join().unwrap_or_else(|_| {
            warn!("simulation thread panicked");
            None
        });
        self.shared.shutdown.store(true, Ordering::SeqCst);
        let _ = self.accept.join();
        saved
    }

    pub fn stop(self) -> Option<SavedEpisode> {
        (self.stopper())();
        self.join()
    }
}

/// Binds `addr` and starts the simulation and accept threads.
pub fn serve(config: ServiceConfig, addr: &str) -> Result<ServerHandle> {
    let session = Session::new(config)?;
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let shared = Arc::new(Shared::default());
    let (events_tx, events_rx) = mpsc::channel();

    let sim_shared = Arc::clone(&shared);
    let sim = thread::Builder::new()
        .name("tracebench-sim".into())
        .spawn(move || SimLoop::new(session, sim_shared).run(events_rx))?;
    let accept_shared = Arc::clone(&shared);
    let accept = thread::Builder::new()
        .name("tracebench-accept".into())
        .spawn(move || accept_loop(listener, events_tx, accept_shared))?;
    info!("listening on {local}");
    Ok(ServerHandle {
        addr: local,
        shared,
        sim,
        accept,
    })
}

fn accept_loop(listener: TcpListener, events: Sender<Event>, shared: Arc<Shared>) {
    let mut next_id: ClientId = 1;
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id;
                next_id += 1;
                let events = events.clone();
                let shared = Arc::clone(&shared);
                let spawned = thread::Builder::new()
                    .name(format!("tracebench-conn-{id}"))
                    .spawn(move || {
                        if let Err(e) = handle_connection(stream, id, events, &shared) {
                            warn!("connection {peer}: {e}");
                        }
                    });
                if let Err(e) = spawned {
                    warn!("cannot spawn connection thread: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(10));
            }
        }
    }
}

/// Peeks up to `n` bytes. Protocol clients may stay silent after connecting,
/// so a timeout yields whatever has arrived.
fn peek_prefix(stream: &TcpStream, n: usize) -> io::Result<Vec<u8>> {
    let mut buf = vec![0; n];
    let deadline = Instant::now() + SNIFF_WINDOW;
    loop {
        let got = match stream.peek(&mut buf) {
            Ok(got) => got,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => 0,
            Err(e) => return Err(e),
        };
        if got >= n || Instant::now() > deadline {
            buf.truncate(got);
            return Ok(buf);
        }
        thread::sleep(Duration::from_millis(2));
    }
}

fn handle_connection(stream: TcpStream, id: ClientId, events: Sender<Event>, shared: &Shared) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(SNIFF_WINDOW))?;
    let prefix = peek_prefix(&stream, 4)?;
    if prefix.starts_with(b"GET ") {
        stream.set_read_timeout(Some(Duration::from_secs(5)))?;
        return serve_http(stream, shared);
    }
    stream.set_read_timeout(None)?;

    let (tx, rx) = mpsc::channel();
    let writer_stream = stream.try_clone()?;
    thread::Builder::new()
        .name(format!("tracebench-write-{id}"))
        .spawn(move || write_loop(writer_stream, rx))?;
    let registry_stream = stream.try_clone()?;
    if events
        .send(Event::Connected {
            id,
            tx,
            stream: registry_stream,
        })
        .is_err()
    {
        return Ok(());
    }
    read_loop(stream, id, &events);
    let _ = events.send(Event::Disconnected { id });
    Ok(())
}

fn read_loop(mut stream: TcpStream, id: ClientId, events: &Sender<Event>) {
    loop {
        let event = match read_frame(&mut stream) {
            Ok(frame) => {
                let client_seq = frame.json.get("client_seq").and_then(|v| v.as_u64());
                match serde_json::from_value::<CommandMessage>(frame.json) {
                    Ok(cmd) => Event::Command { id, cmd },
                    Err(e) => Event::Malformed {
                        id,
                        client_seq,
                        message: format!("malformed command: {e}"),
                    },
                }
            }
            Err(e) if e.kind() == io::ErrorKind::InvalidData => Event::Malformed {
                id,
                client_seq: None,
                message: format!("invalid JSON: {e}"),
            },
            Err(e) if e.kind() == io::ErrorKind::InvalidInput => {
                let _ = events.send(Event::Malformed {
                    id,
                    client_seq: None,
                    message: e.to_string(),
                });
                return;
            }
            Err(_) => return,
        };
        if events.send(event).is_err() {
            return;
        }
    }
}

fn write_loop(stream: TcpStream, rx: Receiver<Outgoing>) {
    let mut w = io::BufWriter::new(stream);
    let mut seq = 0u64;
    for mut out in rx {
        seq += 1;
        out.msg.set_seq(seq);
        if write_frame(&mut w, &out.msg, out.attachment.as_deref().map(Vec::as_slice)).is_err() {
            return;
        }
    }
}

fn serve_http(mut stream: TcpStream, shared: &Shared) -> io::Result<()> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 512];
    while !buf.windows(4).any(|w| w == b"\r\n\r\n") && buf.len() < 8192 {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    let line = String::from_utf8_lossy(&buf);
    let path = line.split_whitespace().nth(1).unwrap_or("");
    let (status, body) = if path == "/health" {
        let body = serde_json::json!({
            "status": "ok",
            "version": env!("CARGO_PKG_VERSION"),
            "ticks": shared.ticks.load(Ordering::Relaxed),
            "clients": shared.clients.load(Ordering::Relaxed),
        });
        ("200 OK", body.to_string())
    } else {
        ("404 Not Found", r#"{"error":"not found"}"#.to_string())
    };
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}

struct SimLoop {
    session: Session,
    shared: Arc<Shared>,
    clients: BTreeMap<ClientId, Client>,
    controller: Option<(ClientId, String)>,
    hasher: RandomState,
    /// Move commands acknowledged once the tick that consumes them has run.
    move_acks: Vec<(ClientId, u64)>,
}

impl SimLoop {
    fn new(session: Session, shared: Arc<Shared>) -> Self {
        Self {
            session,
            shared,
            clients: BTreeMap::new(),
            controller: None,
            hasher: RandomState::new(),
            move_acks: Vec::new(),
        }
    }

    fn time(&self) -> f64 {
        self.session.world().time
    }

    fn send(&mut self, id: ClientId, msg: StreamMessage, attachment: Option<Arc<Vec<u8>>>) {
        let dead = match self.clients.get(&id) {
            Some(c) => c.tx.send(Outgoing { msg, attachment }).is_err(),
            None => false,
        };
        if dead {
            self.drop_client(id);
        }
    }

    fn broadcast(&mut self, msg: StreamMessage, attachment: Option<Arc<Vec<u8>>>) {
        let ids: Vec<ClientId> = self.clients.keys().copied().collect();
        for id in ids {
            self.send(id, msg.clone(), attachment.clone());
        }
    }

    fn snapshot_frames(&self) -> Vec<Outgoing> {
        match self.session.snapshot() {
            Ok(frames) => frames
                .into_iter()
                .map(|(msg, a)| Outgoing {
                    msg,
                    attachment: a.map(Arc::new),
                })
                .collect(),
            Err(e) => vec![Outgoing {
                msg: self.error(None, format!("render failed: {e}")),
                attachment: None,
            }],
        }
    }

    fn send_snapshot(&mut self, id: Option<ClientId>) {
        for out in self.snapshot_frames() {
            match id {
                Some(id) => self.send(id, out.msg, out.attachment),
                None => self.broadcast(out.msg, out.attachment),
            }
        }
    }

    fn error(&self, client_seq: Option<u64>, message: String) -> StreamMessage {
        StreamMessage::Error {
            seq: 0,
            time: self.time(),
            client_seq,
            message,
        }
    }

    fn ack(&mut self, id: ClientId, client_seq: u64) {
        let token = match &self.controller {
            Some((c, token)) if *c == id => Some(token.clone()),
            _ => None,
        };
        let msg = StreamMessage::Ack {
            seq: 0,
            time: self.time(),
            client_seq,
            tick: self.session.tick_count(),
            controller: token.is_some(),
            token,
        };
        self.send(id, msg, None);
    }

    fn claim(&mut self, id: ClientId) -> bool {
        match &self.controller {
            Some((c, _)) => *c == id,
            None => {
                let token = format!("{:016x}", self.hasher.hash_one((id, Instant::now())));
                self.controller = Some((id, token));
                info!("client {id} is the controller");
                true
            }
        }
    }

    fn drop_client(&mut self, id: ClientId) {
        if let Some(c) = self.clients.remove(&id) {
            let _ = c.stream.shutdown(Shutdown::Both);
        }
        if matches!(&self.controller, Some((c, _)) if *c == id) {
            self.controller = None;
        }
        self.shared.clients.store(self.clients.len(), Ordering::Relaxed);
    }

    fn recording_stopped(&mut self, result: Result<SavedEpisode>, client_seq: Option<u64>) -> Option<SavedEpisode> {
        let time = self.time();
        match result {
            Ok(saved) => {
                info!("saved episode {} ({} steps, {})", saved.episode_id, saved.steps, saved.outcome);
                self.broadcast(
                    StreamMessage::Recording {
                        seq: 0,
                        time,
                        on: false,
                        episode_id: Some(saved.episode_id),
                        steps: saved.steps,
                        outcome: Some(saved.outcome),
                    },
                    None,
                );
                Some(saved)
            }
            Err(e) => {
                let err = self.error(client_seq, e.to_string());
                self.broadcast(err, None);
                self.broadcast(
                    StreamMessage::Recording {
                        seq: 0,
                        time,
                        on: false,
                        episode_id: None,
                        steps: 0,
                        outcome: None,
                    },
                    None,
                );
                None
            }
        }
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::Connected { id, tx, stream } => {
                self.clients.insert(id, Client { tx, stream });
                self.shared.clients.store(self.clients.len(), Ordering::Relaxed);
                self.claim(id);
                self.ack(id, 0);
                self.send_snapshot(Some(id));
                let alert = self.session.alert_message();
                self.send(id, alert, None);
            }
            Event::Disconnected { id } => self.drop_client(id),
            Event::Malformed { id, client_seq, message } => {
                let err = self.error(client_seq, message);
                self.send(id, err, None);
            }
            Event::Command { id, cmd } => self.command(id, cmd),
        }
    }

    fn command(&mut self, id: ClientId, cmd: CommandMessage) {
        let cs = cmd.client_seq();
        if cmd.is_control() && !self.claim(id) {
            let err = self.error(Some(cs), "another client holds the controller token".into());
            self.send(id, err, None);
            return;
        }
        let failure = match cmd {
            CommandMessage::Move { dx, dy, dtheta, .. } => {
                if [dx, dy, dtheta].iter().all(|v| v.is_finite()) {
                    self.session.queue_move(Move { dx, dy, dtheta });
                    self.move_acks.push((id, cs));
                    return;
                } else {
                    Some("move deltas must be finite".to_string())
                }
            }
            CommandMessage::Grip { aperture, .. } => {
                if aperture.is_finite() {
                    self.session.set_aperture(aperture);
                    None
                } else {
                    Some("aperture must be finite".to_string())
                }
            }
            CommandMessage::Record {
                action: RecordAction::Start,
                ..
            } => match self.session.start_recording() {
                Ok(()) => {
                    self.ack(id, cs);
                    let msg = StreamMessage::Recording {
                        seq: 0,
                        time: self.time(),
                        on: true,
                        episode_id: None,
                        steps: 0,
                        outcome: None,
                    };
                    self.broadcast(msg, None);
                    return;
                }
                Err(e) => Some(e.to_string()),
            },
            CommandMessage::Record {
                action: RecordAction::Stop,
                ..
            } => {
                if !self.session.is_recording() {
                    Some("not recording".to_string())
                } else {
                    let result = self.session.stop_recording();
                    if result.is_ok() {
                        self.ack(id, cs);
                    }
                    self.recording_stopped(result, Some(cs));
                    return;
                }
            }
            CommandMessage::Reset { seed, preset, .. } => match self.session.reset(seed, preset) {
                Ok(()) => {
                    self.ack(id, cs);
                    self.send_snapshot(None);
                    return;
                }
                Err(e) => Some(e.to_string()),
            },
            CommandMessage::Snapshot { .. } => {
                self.ack(id, cs);
                self.send_snapshot(Some(id));
                return;
            }
        };
        match failure {
            None => self.ack(id, cs),
            Some(message) => {
                let err = self.error(Some(cs), message);
                self.send(id, err, None);
            }
        }
    }

    fn run(mut self, events: Receiver<Event>) -> Option<SavedEpisode> {
        let period = Duration::from_secs_f64(1.0 / self.session.config().tick_hz);
        let every = self.session.config().broadcast_every;
        let mut next = Instant::now() + period;
        while !self.shared.shutdown.load(Ordering::SeqCst) {
            while let Ok(event) = events.try_recv() {
                self.handle(event);
            }
            let report = self.session.tick();
            self.shared.ticks.store(self.session.tick_count(), Ordering::Relaxed);
            for (id, cs) in std::mem::take(&mut self.move_acks) {
                self.ack(id, cs);
            }
            if let Some(fault) = report.fault {
                warn!("simulation fault, session reset: {fault}");
                let err = self.error(None, format!("simulation fault, session reset: {fault}"));
                self.broadcast(err, None);
                self.send_snapshot(None);
            }
            if report.alert_changed.is_some() {
                let alert = self.session.alert_message();
                self.broadcast(alert, None);
            }
            if self.session.tick_count().is_multiple_of(every) {
                self.send_snapshot(None);
            }
            let now = Instant::now();
            if next > now {
                thread::sleep(next - now);
                next += period;
            } else {
                next = now + period;
            }
        }
        let saved = if self.session.is_recording() {
            let result = self.session.stop_recording();
            self.recording_stopped(result, None)
        } else {
            None
        };
        let ids: Vec<ClientId> = self.clients.keys().copied().collect();
        for id in ids {
            self.drop_client(id);
        }
        info!("stopped after {} ticks", self.session.tick_count());
        saved
    }
}
