//! Live shared-control sessions over websockets.
//!
//! Each connection to `/session` owns at most one running episode. The
//! engine runs on a blocking worker at its own fixed step; pointer input
//! reaches it only through a latest-value mailbox, and decimated state frames
//! flow back through a channel. `/health` reports the service version.

pub mod protocol;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use autonomy_core::config::{EpisodeConfig, Mode};
use autonomy_core::engine::{Episode, FailureReason, Outcome};
use autonomy_core::operator::{InputMailbox, OperatorKind};
use autonomy_core::Vec3;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use protocol::{arr, parse_lines, ClientMessage, ResultFrame, ServerMessage, StateFrame};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Axis-aligned box that pointer input is clamped to (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workspace {
    pub min: Vec3,
    pub max: Vec3,
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            min: Vec3::new(0.05, -0.35, -0.02),
            max: Vec3::new(0.55, 0.35, 0.35),
        }
    }
}

impl Workspace {
    /// Clamped position and whether clamping changed it.
    pub fn clamp(&self, p: Vec3) -> (Vec3, bool) {
        let c = p.sup(&self.min).inf(&self.max);
        (c, c != p)
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Template for every session's episode; mode and operator kind are overridden.
    pub episode: EpisodeConfig,
    pub stream_hz: f64,
    /// Run the engine in wall-clock time. When false it runs as fast as it can.
    pub paced: bool,
    pub workspace: Workspace,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            episode: EpisodeConfig::default(),
            stream_hz: 30.0,
            paced: true,
            workspace: Workspace::default(),
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ServeError> {
        self.episode.validate()?;
        if !(self.stream_hz.is_finite() && self.stream_hz > 0.0) {
            return Err(ServeError::Config(format!(
                "stream_hz must be > 0, got {}",
                self.stream_hz
            )));
        }
        if (0..3).any(|i| self.workspace.min[i].partial_cmp(&self.workspace.max[i]) != Some(std::cmp::Ordering::Less)) {
            return Err(ServeError::Config(
                "workspace min must be below max on every axis".into(),
            ));
        }
        Ok(())
    }

    /// Ticks between streamed frames.
    fn frame_stride(&self) -> u64 {
        ((1.0 / (self.stream_hz * self.episode.dt)).round() as u64).max(1)
    }

    fn session_config(&self, seed: Option<u64>, dx: Option<f64>, dz: Option<f64>) -> EpisodeConfig {
        let mut cfg = self.episode.clone();
        cfg.mode = Mode::Shared;
        cfg.operator.kind = OperatorKind::LiveInput;
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        if let Some(dx) = dx {
            cfg.goal_error.dx = dx;
        }
        if dz.is_some() {
            cfg.goal_error.dz = dz;
        }
        cfg
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("invalid service configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Episode(#[from] autonomy_core::Error),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

pub struct Server {
    listener: TcpListener,
    app: Router,
}

impl Server {
    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub async fn run(self) -> Result<(), ServeError> {
        axum::serve(self.listener, self.app).await?;
        Ok(())
    }
}

/// Validates the config and binds the listener.
pub async fn bind(config: ServiceConfig, addr: SocketAddr) -> Result<Server, ServeError> {
    config.validate()?;
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    Ok(Server {
        listener,
        app: router(Arc::new(config)),
    })
}

pub fn router(config: Arc<ServiceConfig>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/session", get(session_upgrade))
        .with_state(config)
}

async fn health() -> impl IntoResponse {
    Json(serde_json::json!({ "status": "ok", "version": VERSION }))
}

async fn session_upgrade(ws: WebSocketUpgrade, State(config): State<Arc<ServiceConfig>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| session(socket, config))
}

struct Running {
    stop: Arc<AtomicBool>,
    worker: JoinHandle<()>,
}

async fn session(socket: WebSocket, config: Arc<ServiceConfig>) {
    tracing::info!("session opened");
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::channel::<ServerMessage>(256);
    let writer = tokio::spawn(async move {
        while let Some(msg) = rx.recv().await {
            let text = serde_json::to_string(&msg).expect("server messages always serialize");
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });

    let mailbox = InputMailbox::new();
    let mut running: Option<Running> = None;
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(text) => text,
            Message::Close(_) => break,
            _ => continue,
        };
        for parsed in parse_lines(text.as_str()) {
            let reply = match parsed {
                Ok(msg) => handle(msg, &config, &mailbox, &mut running, &tx),
                Err(e) => Some(ServerMessage::Error {
                    message: format!("malformed message: {e}"),
                }),
            };
            if let Some(reply) = reply {
                if tx.send(reply).await.is_err() {
                    break;
                }
            }
        }
    }

    if let Some(r) = running.take() {
        r.stop.store(true, Ordering::Relaxed);
        let _ = r.worker.await;
    }
    drop(tx);
    let _ = writer.await;
    tracing::info!("session closed");
}

/// Applies one client message; returns an immediate reply, if any.
fn handle(
    msg: ClientMessage,
    config: &ServiceConfig,
    mailbox: &Arc<InputMailbox>,
    running: &mut Option<Running>,
    tx: &mpsc::Sender<ServerMessage>,
) -> Option<ServerMessage> {
    match msg {
        ClientMessage::Input { pos } => {
            let raw = Vec3::from(pos);
            if !raw.iter().all(|c| c.is_finite()) {
                return Some(ServerMessage::Error {
                    message: "input position must be finite".into(),
                });
            }
            let (clamped, changed) = config.workspace.clamp(raw);
            mailbox.store(clamped);
            changed.then(|| ServerMessage::Warning {
                message: "input outside workspace, clamped".into(),
                pos: arr(&clamped),
            })
        }
        ClientMessage::Start { seed, dx, dz } => {
            if running.as_ref().is_some_and(|r| !r.worker.is_finished()) {
                return Some(ServerMessage::Error {
                    message: "an episode is already running".into(),
                });
            }
            let cfg = config.session_config(seed, dx, dz);
            match Episode::with_mailbox(cfg, mailbox.clone()) {
                Ok(episode) => {
                    tracing::debug!(seed = episode.config().seed, "episode started");
                    let stop = Arc::new(AtomicBool::new(false));
                    let opts = DriveOptions {
                        stride: config.frame_stride(),
                        paced: config.paced,
                    };
                    let worker = {
                        let (stop, tx) = (stop.clone(), tx.clone());
                        tokio::task::spawn_blocking(move || drive(episode, opts, &stop, &tx))
                    };
                    *running = Some(Running { stop, worker });
                    None
                }
                Err(e) => {
                    tracing::warn!("cannot start episode: {e}");
                    Some(ServerMessage::Error {
                        message: format!("cannot start episode: {e}"),
                    })
                }
            }
        }
        ClientMessage::Stop => match running.as_ref() {
            Some(r) if !r.worker.is_finished() => {
                r.stop.store(true, Ordering::Relaxed);
                None
            }
            _ => Some(ServerMessage::Error {
                message: "no episode is running".into(),
            }),
        },
    }
}

#[derive(Debug, Clone, Copy)]
struct DriveOptions {
    stride: u64,
    paced: bool,
}

/// Engine loop for one episode. Runs on a blocking worker.
fn drive(mut episode: Episode, opts: DriveOptions, stop: &AtomicBool, tx: &mpsc::Sender<ServerMessage>) {
    let started = Instant::now();
    let result = loop {
        if stop.load(Ordering::Relaxed) {
            break ResultFrame {
                success: false,
                completion_time: None,
                failure_reason: Some("stopped".into()),
                ticks: episode.ticks(),
            };
        }
        let state = match episode.tick() {
            Ok(state) => Some(state),
            Err(e) if episode.outcome().is_none() => {
                let _ = tx.blocking_send(ServerMessage::Error {
                    message: format!("episode aborted: {e}"),
                });
                return;
            }
            Err(_) => None,
        };
        let outcome = episode.outcome();
        if let Some(state) = state {
            if episode.ticks().is_multiple_of(opts.stride) || outcome.is_some() {
                if opts.paced {
                    let due = Duration::from_secs_f64(state.t);
                    if let Some(wait) = due.checked_sub(started.elapsed()) {
                        std::thread::sleep(wait);
                    }
                }
                if tx
                    .blocking_send(ServerMessage::State(StateFrame::from(&state)))
                    .is_err()
                {
                    return;
                }
            }
        }
        match outcome {
            Some(Outcome::Success { completion_time }) => {
                break ResultFrame {
                    success: true,
                    completion_time: Some(completion_time),
                    failure_reason: None,
                    ticks: episode.ticks(),
                }
            }
            Some(Outcome::Failure(reason)) => {
                break ResultFrame {
                    success: false,
                    completion_time: None,
                    failure_reason: Some(reason_str(reason).into()),
                    ticks: episode.ticks(),
                }
            }
            None => {}
        }
    };
    let _ = tx.blocking_send(ServerMessage::Result(result));
}

fn reason_str(reason: FailureReason) -> &'static str {
    match reason {
        FailureReason::Timeout => "timeout",
        FailureReason::StuckCollision => "stuck_collision",
        FailureReason::Unreachable => "unreachable",
    }
}
