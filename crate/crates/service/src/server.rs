//! HTTP and WebSocket front end. The simulation runs on its own thread; the
//! async side only forwards client messages into its queue and writes out
//! what it publishes.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use anyhow::Context;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Serialize;
use tokio::sync::{mpsc, oneshot, watch};

use crate::models::list_models;
use crate::session::{Session, SessionRequest, SessionStatus};
use crate::wire::WireMessage;

/// Telemetry messages buffered per client. A client that falls this far
/// behind is disconnected; telemetry is never dropped silently.
const TELEMETRY_BACKLOG: usize = 1024;

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub data_dir: PathBuf,
    pub session: SessionRequest,
    /// Simulated seconds per wall-clock second. 1.0 is real time.
    pub speedup: f64,
}

struct ClientTx {
    telemetry: mpsc::Sender<String>,
    frames: watch::Sender<Option<String>>,
}

enum Inbound {
    Connect { id: u64, tx: ClientTx },
    Disconnect { id: u64 },
    Message { id: u64, msg: WireMessage },
    BadMessage { id: u64, error: String },
    Switch {
        request: SessionRequest,
        reply: oneshot::Sender<Result<SessionStatus, String>>,
    },
    Shutdown,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ServerStatus {
    #[serde(flatten)]
    pub session: SessionStatus,
    pub clients: usize,
    pub authority: Option<u64>,
    pub data_dir: PathBuf,
}

#[derive(Clone)]
struct AppState {
    inbound: mpsc::UnboundedSender<Inbound>,
    status: Arc<RwLock<ServerStatus>>,
    data_dir: PathBuf,
    next_client: Arc<AtomicU64>,
}

/// A running server. Dropping it does not stop the server; call
/// [`ServerHandle::shutdown`].
pub struct ServerHandle {
    pub addr: SocketAddr,
    inbound: mpsc::UnboundedSender<Inbound>,
    stop: Option<oneshot::Sender<()>>,
    http: tokio::task::JoinHandle<()>,
    sim: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub async fn shutdown(mut self) {
        let _ = self.inbound.send(Inbound::Shutdown);
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let _ = (&mut self.http).await;
        if let Some(sim) = self.sim.take() {
            let _ = tokio::task::spawn_blocking(move || sim.join()).await;
        }
    }

    /// Resolves when the HTTP side stops.
    pub async fn wait(mut self) {
        let _ = (&mut self.http).await;
    }
}

/// Binds, starts the simulation thread and serves until shut down.
pub async fn serve(cfg: ServeConfig) -> anyhow::Result<ServerHandle> {
    anyhow::ensure!(cfg.speedup > 0.0 && cfg.speedup.is_finite(), "speedup must be positive");
    std::fs::create_dir_all(&cfg.data_dir)
        .with_context(|| format!("cannot create data dir {}", cfg.data_dir.display()))?;
    let session = Session::start(cfg.session.clone(), &cfg.data_dir)?;
    let listener = tokio::net::TcpListener::bind(cfg.addr)
        .await
        .with_context(|| format!("cannot bind {}", cfg.addr))?;
    let addr = listener.local_addr()?;

    let (tx, rx) = mpsc::unbounded_channel();
    let status = Arc::new(RwLock::new(ServerStatus {
        session: session.status(),
        clients: 0,
        authority: None,
        data_dir: cfg.data_dir.clone(),
    }));
    let sim_status = status.clone();
    let data_dir = cfg.data_dir.clone();
    let tick_wall = Duration::from_secs_f64(0.1 / cfg.speedup);
    let sim = std::thread::Builder::new()
        .name("sim-loop".into())
        .spawn(move || SimLoop::new(session, data_dir, sim_status).run(rx, tick_wall))?;

    let state = AppState {
        inbound: tx.clone(),
        status,
        data_dir: cfg.data_dir.clone(),
        next_client: Arc::new(AtomicU64::new(1)),
    };
    let app = router(state);
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let http = tokio::spawn(async move {
        let res = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stop_rx.await;
            })
            .await;
        if let Err(e) = res {
            log::error!("http server stopped: {e}");
        }
    });
    log::info!("listening on http://{addr}");
    Ok(ServerHandle {
        addr,
        inbound: tx,
        stop: Some(stop_tx),
        http,
        sim: Some(sim),
    })
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/status", get(get_status))
        .route("/api/models", get(get_models))
        .route("/api/runs/{id}/report", get(get_report))
        .route("/api/session", post(post_session))
        .route("/ws", get(ws_upgrade))
        .with_state(state)
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

async fn get_status(State(st): State<AppState>) -> Json<ServerStatus> {
    Json(st.status.read().expect("status lock").clone())
}

async fn get_models(State(st): State<AppState>) -> Response {
    let dir = st.data_dir.clone();
    match tokio::task::spawn_blocking(move || list_models(&dir)).await {
        Ok(models) => Json(models).into_response(),
        Err(e) => ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

async fn get_report(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    if !valid_id(&id) {
        return ApiError(StatusCode::BAD_REQUEST, format!("bad run id `{id}`")).into_response();
    }
    let path = st.data_dir.join("runs").join(format!("{id}.report.json"));
    match tokio::fs::read_to_string(&path).await {
        Ok(text) => match serde_json::from_str::<serde_json::Value>(&text) {
            Ok(v) => Json(v).into_response(),
            Err(e) => ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        },
        Err(_) => ApiError(StatusCode::NOT_FOUND, format!("no run `{id}`")).into_response(),
    }
}

async fn post_session(State(st): State<AppState>, Json(request): Json<SessionRequest>) -> Response {
    let (reply, rx) = oneshot::channel();
    if st.inbound.send(Inbound::Switch { request, reply }).is_err() {
        return ApiError(StatusCode::SERVICE_UNAVAILABLE, "simulation stopped".into()).into_response();
    }
    match rx.await {
        Ok(Ok(status)) => Json(status).into_response(),
        Ok(Err(e)) => ApiError(StatusCode::BAD_REQUEST, e).into_response(),
        Err(_) => ApiError(StatusCode::SERVICE_UNAVAILABLE, "simulation stopped".into()).into_response(),
    }
}

async fn ws_upgrade(State(st): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| client(socket, st))
}

async fn client(socket: WebSocket, st: AppState) {
    let id = st.next_client.fetch_add(1, Ordering::Relaxed);
    let (tel_tx, mut tel_rx) = mpsc::channel::<String>(TELEMETRY_BACKLOG);
    let (frame_tx, mut frame_rx) = watch::channel::<Option<String>>(None);
    if st
        .inbound
        .send(Inbound::Connect {
            id,
            tx: ClientTx {
                telemetry: tel_tx,
                frames: frame_tx,
            },
        })
        .is_err()
    {
        return;
    }
    let (mut sink, mut stream) = socket.split();

    let writer = tokio::spawn(async move {
        loop {
            // telemetry first, so a frame never overtakes its tick
            tokio::select! {
                biased;
                msg = tel_rx.recv() => match msg {
                    Some(text) => {
                        if sink.send(Message::Text(text.into())).await.is_err() {
                            break;
                        }
                    }
                    None => break,
                },
                changed = frame_rx.changed() => {
                    if changed.is_err() {
                        break;
                    }
                    let frame = frame_rx.borrow_and_update().clone();
                    if let Some(text) = frame {
                        if sink.send(Message::Text(text.into())).await.is_err() {
                            break;
                        }
                    }
                }
            }
        }
        let _ = sink.close().await;
    });

    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let item = match serde_json::from_str::<WireMessage>(&text) {
            Ok(msg) => Inbound::Message { id, msg },
            Err(e) => Inbound::BadMessage {
                id,
                error: format!("unreadable message: {e}"),
            },
        };
        if st.inbound.send(item).is_err() {
            break;
        }
    }
    let _ = st.inbound.send(Inbound::Disconnect { id });
    writer.abort();
}

struct SimLoop {
    session: Session,
    data_dir: PathBuf,
    status: Arc<RwLock<ServerStatus>>,
    clients: HashMap<u64, ClientTx>,
    authority: Option<u64>,
    last_tick: u64,
}

impl SimLoop {
    fn new(session: Session, data_dir: PathBuf, status: Arc<RwLock<ServerStatus>>) -> Self {
        Self {
            session,
            data_dir,
            status,
            clients: HashMap::new(),
            authority: None,
            last_tick: 0,
        }
    }

    fn send_error(&mut self, id: u64, message: String) {
        let msg = WireMessage::Error {
            tick: self.last_tick,
            message,
        };
        self.send_to(id, &msg);
    }

    fn send_to(&mut self, id: u64, msg: &WireMessage) {
        let text = serde_json::to_string(msg).expect("wire messages serialize");
        let full = match self.clients.get(&id) {
            Some(c) => c.telemetry.try_send(text).is_err(),
            None => false,
        };
        if full {
            self.drop_client(id, "telemetry backlog full");
        }
    }

    fn drop_client(&mut self, id: u64, why: &str) {
        if self.clients.remove(&id).is_some() {
            log::warn!("dropping client {id}: {why}");
        }
        if self.authority == Some(id) {
            self.authority = None;
        }
    }

    fn handle(&mut self, item: Inbound) -> bool {
        match item {
            Inbound::Connect { id, tx } => {
                self.clients.insert(id, tx);
            }
            Inbound::Disconnect { id } => {
                self.clients.remove(&id);
                if self.authority == Some(id) {
                    self.authority = None;
                }
            }
            Inbound::BadMessage { id, error } => self.send_error(id, error),
            Inbound::Message { id, msg } => {
                if msg.needs_authority() {
                    match self.authority {
                        None => self.authority = Some(id),
                        Some(holder) if holder != id => {
                            self.send_error(id, format!("client {holder} holds control authority"));
                            return true;
                        }
                        Some(_) => {}
                    }
                }
                match self.session.apply(&msg) {
                    Ok(Some(reply)) => self.send_to(id, &reply),
                    Ok(None) => {}
                    Err(e) => self.send_error(id, e),
                }
            }
            Inbound::Switch { request, reply } => {
                let res = self.switch(request);
                let _ = reply.send(res);
            }
            Inbound::Shutdown => return false,
        }
        true
    }

    fn switch(&mut self, request: SessionRequest) -> Result<SessionStatus, String> {
        let next = Session::start(request, &self.data_dir).map_err(|e| format!("{e:#}"))?;
        if let Err(e) = self.session.close() {
            log::error!("could not save the previous session: {e:#}");
        }
        self.session = next;
        self.last_tick = 0;
        self.publish_status();
        Ok(self.session.status())
    }

    fn publish_status(&self) {
        let mut st = self.status.write().expect("status lock");
        st.session = self.session.status();
        st.clients = self.clients.len();
        st.authority = self.authority;
    }

    fn broadcast(&mut self, out: crate::session::TickOutput) {
        let mut tel = out.telemetry;
        tel.authority = false;
        let plain = serde_json::to_string(&WireMessage::Telemetry(Box::new(tel.clone()))).expect("serializes");
        tel.authority = true;
        let holder = serde_json::to_string(&WireMessage::Telemetry(Box::new(tel))).expect("serializes");
        let frame = serde_json::to_string(&WireMessage::Frame(out.frame)).expect("serializes");
        let mut lagging = Vec::new();
        for (&id, c) in &self.clients {
            let text = if self.authority == Some(id) { holder.clone() } else { plain.clone() };
            if c.telemetry.try_send(text).is_err() {
                lagging.push(id);
                continue;
            }
            // a slow client only ever sees the newest frame
            let _ = c.frames.send(Some(frame.clone()));
        }
        for id in lagging {
            self.drop_client(id, "telemetry backlog full");
        }
    }

    fn run(mut self, mut rx: mpsc::UnboundedReceiver<Inbound>, tick_wall: Duration) {
        let mut next = Instant::now();
        let mut was_finished = false;
        loop {
            while let Ok(item) = rx.try_recv() {
                if !self.handle(item) {
                    self.finish();
                    return;
                }
            }
            match self.session.step() {
                Ok(Some(out)) => {
                    self.last_tick = out.telemetry.tick;
                    self.broadcast(out);
                    was_finished = false;
                }
                Ok(None) => {
                    if !was_finished {
                        if let Err(e) = self.session.close() {
                            log::error!("could not save the run: {e:#}");
                        }
                        was_finished = true;
                    }
                }
                Err(e) => {
                    log::error!("simulation step failed: {e:#}");
                    let ids: Vec<u64> = self.clients.keys().copied().collect();
                    for id in ids {
                        self.send_error(id, format!("simulation error: {e:#}"));
                    }
                }
            }
            self.publish_status();
            next += tick_wall;
            let now = Instant::now();
            if next > now {
                std::thread::sleep(next - now);
            } else {
                // fell behind; do not try to catch up in a burst
                next = now;
            }
            if rx.is_closed() && self.clients.is_empty() {
                self.finish();
                return;
            }
        }
    }

    fn finish(&mut self) {
        if let Err(e) = self.session.close() {
            log::error!("could not save the session: {e:#}");
        }
        self.publish_status();
    }
}

/// `LANEPILOT_DATA_DIR`, or `./lanepilot-data`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os("LANEPILOT_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new("lanepilot-data").to_path_buf())
}
