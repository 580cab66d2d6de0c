//! Hosting benchmarks behind the wire protocol.
//!
//! A worker owns a [`BenchmarkSet`] and answers `evaluate`, `describe`,
//! `list` and `health` requests on one TCP port. Requests on a connection are
//! processed strictly in order; evaluations of one benchmark are serialized
//! across connections.

use std::collections::BTreeMap;
use std::fmt;
use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::json;
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::task::{JoinHandle, JoinSet};
use tracing::{debug, warn};

use crate::registry::Direction;
use crate::wire::{
    self, decode_payload, describe_failure, encode_frame, validate_point_with_categories,
    ErrorCode, EvalRequest, EvalResponse, FrameReader, Method, ValueKind,
};

pub type Objective = Arc<dyn Fn(&[f64]) -> Result<f64, String> + Send + Sync>;

#[derive(Clone)]
pub struct BenchmarkDefinition {
    pub name: String,
    pub dimensions: usize,
    pub kind: ValueKind,
    pub direction: Direction,
    pub deterministic: bool,
    pub num_categories: Option<Vec<u32>>,
    pub description: Option<String>,
    objective: Objective,
}

impl BenchmarkDefinition {
    pub fn new<F>(
        name: impl Into<String>,
        dimensions: usize,
        kind: ValueKind,
        direction: Direction,
        objective: F,
    ) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::fallible(name, dimensions, kind, direction, move |x| Ok(objective(x)))
    }

    /// Definition whose objective may report failure.
    pub fn fallible<F>(
        name: impl Into<String>,
        dimensions: usize,
        kind: ValueKind,
        direction: Direction,
        objective: F,
    ) -> Self
    where
        F: Fn(&[f64]) -> Result<f64, String> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dimensions,
            kind,
            direction,
            deterministic: true,
            num_categories: None,
            description: None,
            objective: Arc::new(objective),
        }
    }

    pub fn nondeterministic(mut self) -> Self {
        self.deterministic = false;
        self
    }

    pub fn with_description(mut self, text: impl Into<String>) -> Self {
        self.description = Some(text.into());
        self
    }

    pub fn with_num_categories(mut self, sizes: Vec<u32>) -> Self {
        self.num_categories = Some(sizes);
        self
    }

    /// Wraps the objective, e.g. to add latency or logging.
    pub fn map_objective<F>(mut self, wrap: F) -> Self
    where
        F: FnOnce(Objective) -> Objective,
    {
        self.objective = wrap(self.objective);
        self
    }

    pub fn evaluate_raw(&self, x: &[f64]) -> Result<f64, String> {
        (self.objective)(x)
    }

    pub fn describe(&self) -> serde_json::Value {
        let mut value = json!({
            "name": self.name,
            "dimensions": self.dimensions,
            "kind": self.kind,
            "direction": self.direction,
            "deterministic": self.deterministic,
        });
        if let Some(text) = &self.description {
            value["description"] = json!(text);
        }
        if let Some(sizes) = &self.num_categories {
            value["num_categories"] = json!(sizes);
        }
        value
    }
}

impl fmt::Debug for BenchmarkDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkDefinition")
            .field("name", &self.name)
            .field("dimensions", &self.dimensions)
            .field("kind", &self.kind)
            .field("direction", &self.direction)
            .field("deterministic", &self.deterministic)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Error)]
pub enum WorkerError {
    #[error("benchmark `{0}` is defined twice")]
    DuplicateBenchmark(String),
    #[error("cannot bind worker port {port}: {source}")]
    Bind { port: u16, source: std::io::Error },
}

struct Hosted {
    definition: BenchmarkDefinition,
    // serializes evaluations of this benchmark across connections
    lock: Mutex<()>,
}

#[derive(Debug, Default)]
pub struct WorkerStats {
    requests: AtomicU64,
    evaluations: AtomicU64,
}

impl WorkerStats {
    /// Frames received, of any method.
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    /// `evaluate` requests received.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::SeqCst)
    }
}

/// The benchmarks hosted by one worker, keyed by unique name.
pub struct BenchmarkSet {
    hosted: BTreeMap<String, Hosted>,
    stats: WorkerStats,
}

impl BenchmarkSet {
    pub fn new(
        definitions: impl IntoIterator<Item = BenchmarkDefinition>,
    ) -> Result<Self, WorkerError> {
        let mut hosted = BTreeMap::new();
        for definition in definitions {
            let name = definition.name.clone();
            if hosted
                .insert(
                    name.clone(),
                    Hosted {
                        definition,
                        lock: Mutex::new(()),
                    },
                )
                .is_some()
            {
                return Err(WorkerError::DuplicateBenchmark(name));
            }
        }
        Ok(Self {
            hosted,
            stats: WorkerStats::default(),
        })
    }

    pub fn empty() -> Self {
        Self {
            hosted: BTreeMap::new(),
            stats: WorkerStats::default(),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.hosted.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&BenchmarkDefinition> {
        self.hosted.get(name).map(|h| &h.definition)
    }

    pub fn stats(&self) -> &WorkerStats {
        &self.stats
    }

    /// Answers one decoded request. Evaluations run the objective on the
    /// calling thread.
    pub fn handle_request(&self, request: &EvalRequest) -> EvalResponse {
        self.stats.requests.fetch_add(1, Ordering::SeqCst);
        let id = request.id.as_str();
        match request.method {
            Method::Health => EvalResponse::payload(
                id,
                json!({ "benchmarks": self.names().collect::<Vec<_>>() }),
            ),
            Method::List => EvalResponse::payload(
                id,
                serde_json::Value::Array(
                    self.hosted
                        .values()
                        .map(|h| h.definition.describe())
                        .collect(),
                ),
            ),
            Method::Describe => match self.lookup(request) {
                Ok(hosted) => EvalResponse::payload(id, hosted.definition.describe()),
                Err(resp) => resp,
            },
            Method::Evaluate => {
                self.stats.evaluations.fetch_add(1, Ordering::SeqCst);
                match self.lookup(request) {
                    Ok(hosted) => evaluate(hosted, request),
                    Err(resp) => resp,
                }
            }
        }
    }

    fn lookup(&self, request: &EvalRequest) -> Result<&Hosted, EvalResponse> {
        let Some(name) = request.benchmark.as_deref() else {
            return Err(EvalResponse::error(
                &request.id,
                ErrorCode::MalformedRequest,
                "missing benchmark",
            ));
        };
        self.hosted.get(name).ok_or_else(|| {
            EvalResponse::error(
                &request.id,
                ErrorCode::UnknownBenchmark,
                format!("`{name}` is not hosted here"),
            )
        })
    }
}

impl fmt::Debug for BenchmarkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkSet")
            .field("names", &self.hosted.keys().collect::<Vec<_>>())
            .finish()
    }
}

fn evaluate(hosted: &Hosted, request: &EvalRequest) -> EvalResponse {
    let def = &hosted.definition;
    let id = request.id.as_str();
    let Some(values) = request.values.as_deref() else {
        return EvalResponse::error(id, ErrorCode::MalformedRequest, "missing values");
    };
    if let Err(code) = validate_point_with_categories(
        values,
        def.dimensions,
        def.kind,
        def.num_categories.as_deref(),
    ) {
        return EvalResponse::error(
            id,
            code,
            describe_failure(code, values, def.dimensions, def.kind),
        );
    }
    let x: Vec<f64> = values.iter().map(|v| v.value).collect();
    let outcome = {
        let _guard = hosted
            .lock
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner());
        catch_unwind(AssertUnwindSafe(|| def.evaluate_raw(&x)))
    };
    match outcome {
        Ok(Ok(result)) if result.is_finite() => EvalResponse::result(id, result),
        Ok(Ok(result)) => EvalResponse::error(
            id,
            ErrorCode::Internal,
            format!("objective returned {result}"),
        ),
        Ok(Err(message)) => EvalResponse::error(id, ErrorCode::Internal, message),
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "objective panicked".to_owned());
            EvalResponse::error(
                id,
                ErrorCode::Internal,
                format!("objective panicked: {message}"),
            )
        }
    }
}

/// Running worker server.
pub struct WorkerServer {
    local_addr: SocketAddr,
    set: Arc<BenchmarkSet>,
    accept: JoinHandle<()>,
}

impl WorkerServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn port(&self) -> u16 {
        self.local_addr.port()
    }

    pub fn benchmarks(&self) -> &Arc<BenchmarkSet> {
        &self.set
    }

    /// Stops accepting and drops every open connection.
    pub fn shutdown(&self) {
        self.accept.abort();
    }

    /// Runs until the accept loop ends.
    pub async fn wait(mut self) {
        let _ = (&mut self.accept).await;
    }
}

impl Drop for WorkerServer {
    fn drop(&mut self) {
        self.accept.abort();
    }
}

/// Serves `set` on `127.0.0.1:port` (port 0 picks a free port).
pub async fn serve(
    set: impl Into<Arc<BenchmarkSet>>,
    port: u16,
) -> Result<WorkerServer, WorkerError> {
    let listener = TcpListener::bind(("127.0.0.1", port))
        .await
        .map_err(|source| WorkerError::Bind { port, source })?;
    serve_listener(set, listener)
}

pub fn serve_listener(
    set: impl Into<Arc<BenchmarkSet>>,
    listener: TcpListener,
) -> Result<WorkerServer, WorkerError> {
    let set = set.into();
    let local_addr = listener
        .local_addr()
        .map_err(|source| WorkerError::Bind { port: 0, source })?;
    let accept = tokio::spawn(accept_loop(listener, set.clone()));
    Ok(WorkerServer {
        local_addr,
        set,
        accept,
    })
}

async fn accept_loop(listener: TcpListener, set: Arc<BenchmarkSet>) {
    // dropping the JoinSet (when this task is aborted) aborts all connections
    let mut connections = JoinSet::new();
    loop {
        tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    debug!(%peer, "worker connection");
                    connections.spawn(serve_connection(stream, set.clone()));
                }
                Err(e) => warn!("accept failed: {e}"),
            },
            Some(_) = connections.join_next(), if !connections.is_empty() => {}
        }
    }
}

async fn serve_connection(stream: TcpStream, set: Arc<BenchmarkSet>) {
    let _ = stream.set_nodelay(true);
    let (read, mut write) = stream.into_split();
    let mut reader = FrameReader::new(read);
    loop {
        let payload = match reader.next_payload().await {
            Ok(Some(p)) => p,
            Ok(None) => return,
            Err(e) => {
                debug!("closing worker connection: {e}");
                return;
            }
        };
        let response = match decode_payload::<EvalRequest>(&payload) {
            Ok(request) if request.method == Method::Evaluate => {
                let set = set.clone();
                match tokio::task::spawn_blocking(move || set.handle_request(&request)).await {
                    Ok(resp) => resp,
                    Err(e) => EvalResponse::error("", ErrorCode::Internal, e.to_string()),
                }
            }
            Ok(request) => set.handle_request(&request),
            Err(e) => {
                set.stats.requests.fetch_add(1, Ordering::SeqCst);
                EvalResponse::error(e.id.clone().unwrap_or_default(), e.code(), e.reason)
            }
        };
        let frame = match encode_frame(&response) {
            Ok(f) => f,
            Err(e) => {
                let fallback =
                    EvalResponse::error(response.id.clone(), ErrorCode::Internal, e.to_string());
                encode_frame(&fallback).expect("error responses always encode")
            }
        };
        if wire::write_frame(&mut write, &frame).await.is_err() {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::Value;

    fn onemax(d: usize) -> BenchmarkDefinition {
        BenchmarkDefinition::new("pbo-onemax", d, ValueKind::Binary, Direction::Max, |x| {
            x.iter().sum()
        })
    }

    #[test]
    fn onemax_values() {
        let set = BenchmarkSet::new([onemax(3)]).unwrap();
        let req = EvalRequest::evaluate(
            "1",
            "pbo-onemax",
            [1, 0, 1].map(|b| Value::binary(b == 1)).to_vec(),
        );
        let resp = set.handle_request(&req);
        assert_eq!(resp.result, Some(2.0));
        assert_eq!(resp.id, "1");

        let set = BenchmarkSet::new([onemax(60)]).unwrap();
        let resp = set.handle_request(&EvalRequest::evaluate(
            "2",
            "pbo-onemax",
            vec![Value::binary(true); 60],
        ));
        assert_eq!(resp.result, Some(60.0));
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(matches!(
            BenchmarkSet::new([onemax(3), onemax(4)]),
            Err(WorkerError::DuplicateBenchmark(_))
        ));
    }

    #[test]
    fn revalidates_points() {
        let set = BenchmarkSet::new([onemax(3)]).unwrap();
        let resp = set.handle_request(&EvalRequest::evaluate(
            "1",
            "pbo-onemax",
            vec![Value::binary(true); 2],
        ));
        assert_eq!(resp.error_code, Some(ErrorCode::DimensionMismatch));
        let resp = set.handle_request(&EvalRequest::evaluate(
            "1",
            "pbo-onemax",
            vec![Value::continuous(1.0); 3],
        ));
        assert_eq!(resp.error_code, Some(ErrorCode::TypeMismatch));
        let resp = set.handle_request(&EvalRequest::evaluate("1", "nope", vec![]));
        assert_eq!(resp.error_code, Some(ErrorCode::UnknownBenchmark));
    }

    #[test]
    fn nan_and_panics_become_internal_errors() {
        let nan = BenchmarkDefinition::new("nan", 1, ValueKind::Continuous, Direction::Min, |_| {
            f64::NAN
        });
        let boom =
            BenchmarkDefinition::new("boom", 1, ValueKind::Continuous, Direction::Min, |_| {
                panic!("kaboom")
            });
        let fails = BenchmarkDefinition::fallible(
            "fails",
            1,
            ValueKind::Continuous,
            Direction::Min,
            |_| Err("no license".into()),
        );
        let set = BenchmarkSet::new([nan, boom, fails, onemax(1)]).unwrap();
        for name in ["nan", "boom", "fails", "nan", "boom"] {
            let resp = set.handle_request(&EvalRequest::evaluate(
                "e",
                name,
                vec![Value::continuous(0.5)],
            ));
            assert_eq!(resp.error_code, Some(ErrorCode::Internal), "{name}");
            assert!(resp.result.is_none());
        }
        let resp = set.handle_request(&EvalRequest::evaluate(
            "ok",
            "pbo-onemax",
            vec![Value::binary(true)],
        ));
        assert_eq!(resp.result, Some(1.0));
    }

    #[test]
    fn describe_payload() {
        let sphere = BenchmarkDefinition::new(
            "bbob-sphere",
            10,
            ValueKind::Continuous,
            Direction::Min,
            |x| x.iter().map(|v| v * v).sum(),
        );
        let set = BenchmarkSet::new([sphere]).unwrap();
        let resp = set.handle_request(&EvalRequest::describe("d", "bbob-sphere"));
        let payload = resp.payload.unwrap();
        assert_eq!(payload["dimensions"], 10);
        assert_eq!(payload["kind"], "continuous");
        assert_eq!(payload["direction"], "min");
        assert_eq!(payload["deterministic"], true);
    }

    #[test]
    fn health_lists_names() {
        let resp = BenchmarkSet::empty().handle_request(&EvalRequest::health("h"));
        assert!(resp.is_ok());
        assert_eq!(resp.payload.unwrap()["benchmarks"], json!([]));
    }
}
