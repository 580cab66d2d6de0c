//! Blocking client for a coordinator.
//!
//! ```no_run
//! use bencher::client::Client;
//! use bencher::wire::Value;
//!
//! let mut client = Client::from_env().unwrap();
//! let values = vec![Value::continuous(0.5); 10];
//! let result = client.evaluate_point("bbob-sphere", &values).unwrap();
//! assert_eq!(result, 0.0);
//! ```

use std::io;
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::coordinator::{DEFAULT_PORT, PORT_ENV};
use crate::registry::Direction;
use crate::wire::{
    decode_payload, encode_frame, read_frame_blocking, write_frame_blocking, ErrorCode,
    EvalRequest, EvalResponse, FrameBuffer, FrameError, Status, Value, ValueKind,
};

pub const HOST_ENV: &str = "BENCHER_HOST";

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub host: String,
    pub port: u16,
    pub connect_timeout: Duration,
    pub eval_timeout: Duration,
    pub connect_retries: u32,
    pub retry_spacing: Duration,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".to_owned(),
            port: DEFAULT_PORT,
            connect_timeout: Duration::from_secs(10),
            eval_timeout: Duration::from_secs(600),
            connect_retries: 3,
            retry_spacing: Duration::from_secs(1),
        }
    }
}

impl ClientConfig {
    /// Defaults with `BENCHER_HOST` / `BENCHER_PORT` applied.
    pub fn from_env() -> Result<Self, ClientError> {
        let mut config = Self::default();
        if let Ok(host) = std::env::var(HOST_ENV) {
            config.host = host;
        }
        if let Ok(port) = std::env::var(PORT_ENV) {
            config.port = port
                .trim()
                .parse()
                .map_err(|_| ClientError::Config(format!("invalid {PORT_ENV}=`{port}`")))?;
        }
        Ok(config)
    }

    pub fn with_port(mut self, port: u16) -> Self {
        self.port = port;
        self
    }

    fn check(&self) -> Result<(), ClientError> {
        if self.connect_timeout.is_zero() || self.eval_timeout.is_zero() {
            return Err(ClientError::Config("timeouts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    /// The server answered with an error.
    #[error("{code}: {message}")]
    Server { code: ErrorCode, message: String },
    /// No reply within the client's evaluation timeout.
    #[error("worker_timeout: no reply within {0:?}")]
    Timeout(Duration),
    #[error("cannot reach {addr} after {attempts} attempts: {source}")]
    Connect {
        addr: String,
        attempts: u32,
        source: io::Error,
    },
    #[error("transport error: {0}")]
    Transport(#[from] io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    Request(#[from] FrameError),
    #[error("client configuration: {0}")]
    Config(String),
}

impl ClientError {
    /// Error code as seen by the caller; client-side timeouts count as
    /// `worker_timeout`.
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Server { code, .. } => Some(*code),
            ClientError::Timeout(_) => Some(ErrorCode::WorkerTimeout),
            _ => None,
        }
    }
}

/// One row of `list_benchmarks`.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct BenchmarkInfo {
    pub name: String,
    pub dimensions: usize,
    pub kind: ValueKind,
    pub direction: Direction,
    #[serde(default)]
    pub port: Option<u16>,
}

static CLIENT_SEQ: AtomicU64 = AtomicU64::new(0);

/// Connection to a coordinator. Not meant to be shared between threads;
/// open one client per thread instead.
pub struct Client {
    config: ClientConfig,
    conn: Option<(TcpStream, FrameBuffer)>,
    prefix: String,
    seq: u64,
}

impl Client {
    pub fn new(config: ClientConfig) -> Result<Self, ClientError> {
        config.check()?;
        // pid + process-wide counter + random salt keeps ids distinct across clients
        let salt: u32 = rand::random();
        let prefix = format!(
            "{:x}-{:x}-{:08x}",
            std::process::id(),
            CLIENT_SEQ.fetch_add(1, Ordering::Relaxed),
            salt
        );
        Ok(Self {
            config,
            conn: None,
            prefix,
            seq: 0,
        })
    }

    pub fn from_env() -> Result<Self, ClientError> {
        Self::new(ClientConfig::from_env()?)
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    /// A request id never handed out before by this process.
    pub fn next_id(&mut self) -> String {
        self.seq += 1;
        format!("{}-{}", self.prefix, self.seq)
    }

    pub fn evaluate_point(
        &mut self,
        benchmark: &str,
        values: &[Value],
    ) -> Result<f64, ClientError> {
        let id = self.next_id();
        let resp = self.call(&EvalRequest::evaluate(id, benchmark, values.to_vec()))?;
        resp.result
            .ok_or_else(|| ClientError::Protocol("ok response without a result".into()))
    }

    /// All registered benchmarks, ascending by name.
    pub fn list_benchmarks(&mut self) -> Result<Vec<BenchmarkInfo>, ClientError> {
        let id = self.next_id();
        let payload = self
            .call(&EvalRequest::list(id))?
            .payload
            .unwrap_or_default();
        let mut rows: Vec<BenchmarkInfo> = serde_json::from_value(payload)
            .map_err(|e| ClientError::Protocol(format!("bad list payload: {e}")))?;
        rows.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(rows)
    }

    pub fn describe(&mut self, benchmark: &str) -> Result<serde_json::Value, ClientError> {
        let id = self.next_id();
        Ok(self
            .call(&EvalRequest::describe(id, benchmark))?
            .payload
            .unwrap_or_default())
    }

    pub fn health(&mut self) -> Result<serde_json::Value, ClientError> {
        let id = self.next_id();
        Ok(self
            .call(&EvalRequest::health(id))?
            .payload
            .unwrap_or_default())
    }

    /// Sends one request and waits for its response. Connection failures
    /// are retried; failures after the request was sent are not.
    pub fn call(&mut self, request: &EvalRequest) -> Result<EvalResponse, ClientError> {
        let frame = encode_frame(request)?;
        let (stream, buf) = self.connection()?;
        if let Err(e) = write_frame_blocking(stream, &frame) {
            self.conn = None;
            return Err(e.into());
        }
        let resp = match read_frame_blocking(stream, buf) {
            Ok(Some(payload)) => decode_payload::<EvalResponse>(&payload)
                .map_err(|e| ClientError::Protocol(e.reason)),
            Ok(None) => Err(ClientError::Transport(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "coordinator closed the connection",
            ))),
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                Err(ClientError::Timeout(self.config.eval_timeout))
            }
            Err(e) => Err(e.into()),
        };
        let resp = match resp {
            Ok(resp) => resp,
            Err(e) => {
                // the stream may still carry a late reply
                self.conn = None;
                return Err(e);
            }
        };
        if resp.id != request.id {
            self.conn = None;
            return Err(ClientError::Protocol(format!(
                "response id `{}` for request `{}`",
                resp.id, request.id
            )));
        }
        match resp.status {
            Status::Ok => Ok(resp),
            Status::Error => Err(ClientError::Server {
                code: resp.error_code.unwrap_or(ErrorCode::Internal),
                message: resp.message.unwrap_or_default(),
            }),
        }
    }

    fn connection(&mut self) -> Result<&mut (TcpStream, FrameBuffer), ClientError> {
        if self.conn.is_none() {
            let stream = self.connect()?;
            self.conn = Some((stream, FrameBuffer::new()));
        }
        Ok(self.conn.as_mut().expect("connected above"))
    }

    fn connect(&self) -> Result<TcpStream, ClientError> {
        let addr = format!("{}:{}", self.config.host, self.config.port);
        let attempts = self.config.connect_retries + 1;
        let mut last_err = io::Error::other("no attempt made");
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.retry_spacing);
            }
            match self.try_connect(&addr) {
                Ok(stream) => return Ok(stream),
                Err(e) => last_err = e,
            }
        }
        Err(ClientError::Connect {
            addr,
            attempts,
            source: last_err,
        })
    }

    fn try_connect(&self, addr: &str) -> io::Result<TcpStream> {
        let targets: Vec<SocketAddr> = addr.to_socket_addrs()?.collect();
        let mut last_err = io::Error::new(
            io::ErrorKind::NotFound,
            format!("`{addr}` resolves to nothing"),
        );
        for target in targets {
            match TcpStream::connect_timeout(&target, self.config.connect_timeout) {
                Ok(stream) => {
                    stream.set_nodelay(true)?;
                    stream.set_read_timeout(Some(self.config.eval_timeout))?;
                    return Ok(stream);
                }
                Err(e) => last_err = e,
            }
        }
        Err(last_err)
    }
}
