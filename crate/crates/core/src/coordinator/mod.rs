//! The externally exposed server.
//!
//! The coordinator accepts client connections on one port, validates each
//! request against the registry and forwards evaluations to the worker that
//! owns the benchmark. Workers with a `start_command` are spawned and
//! supervised; the rest are treated as externally managed plugin workers and
//! only health-probed.

mod dispatch;
mod supervisor;

use std::collections::{BTreeMap, HashSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::json;
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch, Notify};
use tokio::task::{JoinHandle, JoinSet};
use tracing::{debug, info, warn};

use crate::registry::{Registry, RegistryError};
use crate::wire::{
    decode_payload, describe_failure, encode_frame, frame_payload, validate_point_with_categories,
    write_frame, ErrorCode, EvalRequest, EvalResponse, FrameReader, Method,
};

pub use dispatch::probe_health;
pub use supervisor::{Backoff, RestartPolicy, WorkerSnapshot, WorkerState};

use dispatch::{Job, JobQueue};
use supervisor::{SpawnSpec, Timing, WorkerHandle};

pub const DEFAULT_PORT: u16 = 50051;
pub const PORT_ENV: &str = "BENCHER_PORT";
pub const WORKER_PORT_ENV: &str = "BENCHER_WORKER_PORT";
pub const REGISTRY_ENV: &str = "BENCHER_REGISTRY";
/// `start_command` program name that resolves to [`CoordinatorConfig::self_exe`].
pub const SELF_PROGRAM: &str = "bencher";

#[derive(Debug, Clone)]
pub struct CoordinatorConfig {
    pub listen_port: u16,
    pub registry_path: PathBuf,
    pub eval_timeout: Duration,
    pub max_inflight_per_worker: usize,
    pub restart: RestartPolicy,
    /// How long a worker may take to answer its first health probe.
    pub ready_timeout: Duration,
    /// Delay between health probes while a worker is not ready.
    pub probe_interval: Duration,
    /// Delay between health probes of a ready plugin worker.
    pub health_interval: Duration,
    /// Time granted to in-flight requests on shutdown.
    pub shutdown_grace: Duration,
    /// Time between SIGTERM and SIGKILL for spawned workers.
    pub kill_grace: Duration,
    /// Executable substituted for a `start_command` whose program is `bencher`.
    pub self_exe: Option<PathBuf>,
}

impl CoordinatorConfig {
    pub fn new(registry_path: impl Into<PathBuf>) -> Self {
        Self {
            listen_port: DEFAULT_PORT,
            registry_path: registry_path.into(),
            eval_timeout: Duration::from_secs(300),
            max_inflight_per_worker: 1,
            restart: RestartPolicy::default(),
            ready_timeout: Duration::from_secs(30),
            probe_interval: Duration::from_millis(100),
            health_interval: Duration::from_secs(1),
            shutdown_grace: Duration::from_secs(5),
            kill_grace: Duration::from_secs(5),
            self_exe: None,
        }
    }

    /// Applies `BENCHER_PORT` if set.
    pub fn with_env_overrides(mut self) -> Result<Self, CoordinatorError> {
        if let Ok(port) = std::env::var(PORT_ENV) {
            self.listen_port = port
                .trim()
                .parse()
                .map_err(|_| CoordinatorError::Config(format!("invalid {PORT_ENV}=`{port}`")))?;
        }
        Ok(self)
    }
}

#[derive(Debug, Error)]
pub enum CoordinatorError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("cannot bind listen port {port}: {source}")]
    Bind { port: u16, source: std::io::Error },
    #[error("configuration error: {0}")]
    Config(String),
}

struct Worker {
    handle: Arc<WorkerHandle>,
    queue: mpsc::UnboundedSender<Job>,
}

struct Shared {
    registry: Registry,
    workers: BTreeMap<u16, Worker>,
    inflight: AtomicUsize,
    idle: Notify,
}

impl Shared {
    fn begin(self: &Arc<Self>) -> InflightGuard {
        self.inflight.fetch_add(1, Ordering::SeqCst);
        InflightGuard(self.clone())
    }
}

struct InflightGuard(Arc<Shared>);

impl Drop for InflightGuard {
    fn drop(&mut self) {
        if self.0.inflight.fetch_sub(1, Ordering::SeqCst) == 1 {
            self.0.idle.notify_waiters();
        }
    }
}

/// Handle to a running coordinator.
pub struct Coordinator {
    local_addr: SocketAddr,
    shared: Arc<Shared>,
    config: CoordinatorConfig,
    stop_accepting: watch::Sender<bool>,
    stop_workers: watch::Sender<bool>,
    accept: Mutex<Option<JoinHandle<()>>>,
    supervisors: Mutex<Vec<JoinHandle<()>>>,
    lanes: Mutex<Vec<JoinHandle<()>>>,
    shutting_down: AtomicBool,
}

impl Coordinator {
    /// Loads the registry, binds the listen port, spawns or probes every
    /// worker and waits (up to `ready_timeout`) for them to become ready.
    pub async fn start(config: CoordinatorConfig) -> Result<Self, CoordinatorError> {
        let registry = Registry::load_file(&config.registry_path)?;
        if config.max_inflight_per_worker == 0 {
            return Err(CoordinatorError::Config(
                "max_inflight_per_worker must be at least 1".into(),
            ));
        }
        if config.listen_port != 0 && registry.ports().contains(&config.listen_port) {
            return Err(CoordinatorError::Config(format!(
                "listen port {} is also a worker port in the registry",
                config.listen_port
            )));
        }
        let listener = TcpListener::bind(("0.0.0.0", config.listen_port))
            .await
            .map_err(|source| CoordinatorError::Bind {
                port: config.listen_port,
                source,
            })?;
        let local_addr = listener
            .local_addr()
            .map_err(|source| CoordinatorError::Bind {
                port: config.listen_port,
                source,
            })?;
        let registry_abs = std::path::absolute(&config.registry_path)
            .unwrap_or_else(|_| config.registry_path.clone());

        let timing = Timing {
            ready_timeout: config.ready_timeout,
            probe_interval: config.probe_interval,
            health_interval: config.health_interval,
            kill_grace: config.kill_grace,
        };
        let (stop_workers, workers_rx) = watch::channel(false);
        let mut supervisors = Vec::new();
        let mut lanes = Vec::new();
        let mut workers = BTreeMap::new();
        for port in registry.ports() {
            let start_command = registry
                .on_port(port)
                .next()
                .and_then(|e| e.start_command.clone());
            let handle = Arc::new(WorkerHandle::new(port, start_command.is_some()));
            match start_command {
                Some(argv) => {
                    let spec = spawn_spec(&argv, port, &registry_abs, config.self_exe.as_deref());
                    supervisors.push(tokio::spawn(supervisor::supervise(
                        handle.clone(),
                        spec,
                        config.restart.clone(),
                        timing.clone(),
                        workers_rx.clone(),
                    )));
                }
                None => {
                    supervisors.push(tokio::spawn(supervisor::monitor(
                        handle.clone(),
                        timing.clone(),
                        workers_rx.clone(),
                    )));
                }
            }
            let (tx, rx) = mpsc::unbounded_channel();
            let queue: JobQueue = Arc::new(tokio::sync::Mutex::new(rx));
            for _ in 0..config.max_inflight_per_worker {
                lanes.push(tokio::spawn(dispatch::run_lane(
                    handle.clone(),
                    queue.clone(),
                    config.eval_timeout,
                )));
            }
            workers.insert(port, Worker { handle, queue: tx });
        }

        let shared = Arc::new(Shared {
            registry,
            workers,
            inflight: AtomicUsize::new(0),
            idle: Notify::new(),
        });
        wait_for_workers(&shared, config.ready_timeout).await;

        let (stop_accepting, accept_rx) = watch::channel(false);
        let accept = tokio::spawn(accept_loop(listener, shared.clone(), accept_rx));
        info!(addr = %local_addr, benchmarks = shared.registry.len(), "coordinator listening");
        Ok(Self {
            local_addr,
            shared,
            config,
            stop_accepting,
            stop_workers,
            accept: Mutex::new(Some(accept)),
            supervisors: Mutex::new(supervisors),
            lanes: Mutex::new(lanes),
            shutting_down: AtomicBool::new(false),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn port(&self) -> u16 {
        self.local_addr.port()
    }

    pub fn registry(&self) -> &Registry {
        &self.shared.registry
    }

    pub fn worker(&self, port: u16) -> Option<WorkerSnapshot> {
        self.shared.workers.get(&port).map(|w| w.handle.snapshot())
    }

    pub fn workers(&self) -> Vec<WorkerSnapshot> {
        self.shared
            .workers
            .values()
            .map(|w| w.handle.snapshot())
            .collect()
    }

    /// Routes one request in-process, exactly as if it had arrived on the
    /// listen socket.
    pub async fn route(&self, request: &EvalRequest) -> EvalResponse {
        let payload = serde_json::to_vec(request).expect("request serializes");
        let frame = route(&self.shared, request, payload).await;
        decode_payload(&frame[crate::wire::HEADER_LEN..]).expect("coordinator responses decode")
    }

    /// Stops accepting connections, lets in-flight requests finish within
    /// the grace period, then terminates spawned workers. Calling it again is
    /// a no-op.
    pub async fn shutdown(&self) {
        if self.shutting_down.swap(true, Ordering::SeqCst) {
            return;
        }
        info!("coordinator shutting down");
        let _ = self.stop_accepting.send(true);
        let drained = tokio::time::timeout(self.config.shutdown_grace, async {
            loop {
                let idle = self.shared.idle.notified();
                if self.shared.inflight.load(Ordering::SeqCst) == 0 {
                    break;
                }
                idle.await;
            }
        })
        .await;
        if drained.is_err() {
            warn!(
                pending = self.shared.inflight.load(Ordering::SeqCst),
                "grace period over with requests still in flight"
            );
        }
        let _ = self.stop_workers.send(true);
        let supervisors: Vec<_> = std::mem::take(&mut *lock(&self.supervisors));
        for task in supervisors {
            let _ =
                tokio::time::timeout(self.config.kill_grace + Duration::from_secs(1), task).await;
        }
        // lanes only end when aborted; jobs still queued are answered with
        // worker_unavailable when their reply channel drops
        for task in std::mem::take(&mut *lock(&self.lanes)) {
            task.abort();
        }
        let accept = lock(&self.accept).take();
        if let Some(mut accept) = accept {
            if tokio::time::timeout(Duration::from_secs(1), &mut accept)
                .await
                .is_err()
            {
                accept.abort();
            }
        }
        info!("coordinator stopped");
    }
}

impl Drop for Coordinator {
    fn drop(&mut self) {
        let _ = self.stop_workers.send(true);
        if let Some(accept) = lock(&self.accept).take() {
            accept.abort();
        }
        for task in lock(&self.lanes)
            .drain(..)
            .chain(lock(&self.supervisors).drain(..))
        {
            task.abort();
        }
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn spawn_spec(
    argv: &[String],
    port: u16,
    registry_path: &Path,
    self_exe: Option<&Path>,
) -> SpawnSpec {
    let program = match self_exe {
        Some(exe) if argv[0] == SELF_PROGRAM => exe.to_owned(),
        _ => PathBuf::from(&argv[0]),
    };
    SpawnSpec {
        program,
        args: argv[1..].to_vec(),
        env: vec![
            (WORKER_PORT_ENV.to_owned(), port.to_string()),
            (REGISTRY_ENV.to_owned(), registry_path.display().to_string()),
        ],
    }
}

async fn wait_for_workers(shared: &Shared, timeout: Duration) {
    let deadline = tokio::time::Instant::now() + timeout;
    loop {
        let pending: Vec<u16> = shared
            .workers
            .values()
            .map(|w| w.handle.snapshot())
            .filter(|s| s.state == WorkerState::Starting)
            .map(|s| s.port)
            .collect();
        if pending.is_empty() {
            return;
        }
        if tokio::time::Instant::now() >= deadline {
            warn!(?pending, "workers not ready after startup timeout");
            return;
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
}

async fn accept_loop(listener: TcpListener, shared: Arc<Shared>, mut stop: watch::Receiver<bool>) {
    let mut connections = JoinSet::new();
    loop {
        tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    debug!(%peer, "client connected");
                    connections.spawn(serve_client(stream, shared.clone(), stop.clone()));
                }
                Err(e) => warn!("accept failed: {e}"),
            },
            Some(_) = connections.join_next(), if !connections.is_empty() => {}
            _ = stop.changed() => break,
        }
    }
    drop(listener);
    // keep existing connections alive until their in-flight work is answered
    while connections.join_next().await.is_some() {}
}

async fn serve_client(stream: TcpStream, shared: Arc<Shared>, mut stop: watch::Receiver<bool>) {
    let _ = stream.set_nodelay(true);
    let (read, mut write) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Vec<u8>>();
    let writer = tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            if write_frame(&mut write, &frame).await.is_err() {
                break;
            }
        }
    });

    let in_flight: Arc<Mutex<HashSet<String>>> = Arc::default();
    let mut reader = FrameReader::new(read);
    loop {
        let next = tokio::select! {
            next = reader.next_payload() => next,
            _ = stop.changed() => break,
        };
        let payload = match next {
            Ok(Some(payload)) => payload,
            Ok(None) => break,
            Err(e) => {
                debug!("closing client connection: {e}");
                break;
            }
        };
        let request = match decode_payload::<EvalRequest>(&payload) {
            Ok(request) => request,
            Err(e) => {
                let resp =
                    EvalResponse::error(e.id.clone().unwrap_or_default(), e.code(), e.reason);
                let _ = tx.send(encode_frame(&resp).expect("error responses encode"));
                continue;
            }
        };
        if !in_flight
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(request.id.clone())
        {
            let resp = EvalResponse::error(
                request.id.clone(),
                ErrorCode::MalformedRequest,
                format!(
                    "request id `{}` is already in flight on this connection",
                    request.id
                ),
            );
            let _ = tx.send(encode_frame(&resp).expect("error responses encode"));
            continue;
        }
        let guard = shared.begin();
        let (shared, tx, in_flight) = (shared.clone(), tx.clone(), in_flight.clone());
        tokio::spawn(async move {
            let frame = route(&shared, &request, payload).await;
            in_flight
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .remove(&request.id);
            let _ = tx.send(frame);
            drop(guard);
        });
    }
    // the writer exits once every spawned route task has sent its reply
    drop(tx);
    let _ = writer.await;
}

/// Produces the response frame for one decoded request. `payload` is the
/// request's raw JSON, forwarded verbatim to the worker.
async fn route(shared: &Shared, request: &EvalRequest, payload: Vec<u8>) -> Vec<u8> {
    let id = request.id.as_str();
    let response = match request.method {
        Method::Health => EvalResponse::payload(
            id,
            json!({
                "benchmarks": shared.registry.len(),
                "workers": shared.workers.values().map(|w| w.handle.snapshot()).collect::<Vec<_>>(),
            }),
        ),
        Method::List => EvalResponse::payload(
            id,
            shared
                .registry
                .entries()
                .map(|e| {
                    json!({
                        "name": e.name,
                        "dimensions": e.dimensions,
                        "type": e.benchmark_type,
                        "kind": e.value_kind(),
                        "direction": e.direction,
                        "port": e.port,
                    })
                })
                .collect(),
        ),
        Method::Describe => {
            let name = request.benchmark.as_deref().unwrap_or_default();
            match shared.registry.lookup(name) {
                Ok(entry) => EvalResponse::payload(id, entry.to_json()),
                Err(code) => EvalResponse::error(id, code, format!("unknown benchmark `{name}`")),
            }
        }
        Method::Evaluate => match forward(shared, request, payload).await {
            Ok(raw) => return frame_payload(&raw).expect("worker frames are within the size cap"),
            Err((code, message)) => EvalResponse::error(id, code, message),
        },
    };
    encode_frame(&response).unwrap_or_else(|e| {
        encode_frame(&EvalResponse::error(id, ErrorCode::Internal, e.to_string()))
            .expect("error responses encode")
    })
}

async fn forward(shared: &Shared, request: &EvalRequest, payload: Vec<u8>) -> dispatch::Relay {
    let name = request.benchmark.as_deref().unwrap_or_default();
    let values = request.values.as_deref().unwrap_or_default();
    let entry = shared
        .registry
        .lookup(name)
        .map_err(|code| (code, format!("unknown benchmark `{name}`")))?;
    let kind = entry.value_kind();
    validate_point_with_categories(
        values,
        entry.dimensions,
        kind,
        entry.num_categories.as_deref(),
    )
    .map_err(|code| (code, describe_failure(code, values, entry.dimensions, kind)))?;

    let worker = shared
        .workers
        .get(&entry.port)
        .expect("every registry port has a worker");
    if worker.handle.ready_generation().is_none() {
        let state = worker.handle.snapshot().state;
        return Err((
            ErrorCode::WorkerUnavailable,
            format!("worker on port {} is {state:?}", entry.port),
        ));
    }
    let (reply, rx) = oneshot::channel();
    worker
        .queue
        .send(Job {
            id: request.id.clone(),
            payload,
            reply,
        })
        .map_err(|_| {
            (
                ErrorCode::WorkerUnavailable,
                "worker queue closed".to_owned(),
            )
        })?;
    rx.await.unwrap_or_else(|_| {
        Err((
            ErrorCode::WorkerUnavailable,
            "worker dispatcher stopped".to_owned(),
        ))
    })
}
