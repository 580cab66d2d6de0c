//! Forwarding evaluations to workers.
//!
//! Each worker gets a FIFO job queue drained by `max_inflight_per_worker`
//! lanes. A lane owns one connection and runs one request/response exchange
//! at a time, so with a single lane the worker never sees two requests
//! interleaved.

use std::io;
use std::sync::Arc;
use std::time::Duration;

use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio::sync::{mpsc, oneshot, Mutex};
use tracing::debug;

use super::supervisor::WorkerHandle;
use crate::wire::{
    decode_payload, encode_frame, frame_payload, write_frame, ErrorCode, EvalRequest, EvalResponse,
    FrameReader,
};

/// Outcome of a forwarded evaluation: the worker's raw response payload, or
/// an error generated by the coordinator.
pub(crate) type Relay = Result<Vec<u8>, (ErrorCode, String)>;

pub(crate) struct Job {
    pub id: String,
    pub payload: Vec<u8>,
    pub reply: oneshot::Sender<Relay>,
}

/// Sends one `health` request and waits for an ok answer.
pub async fn probe_health(port: u16, timeout: Duration) -> bool {
    let attempt = async {
        let stream = TcpStream::connect(("127.0.0.1", port)).await?;
        let (read, mut write) = stream.into_split();
        let frame =
            encode_frame(&EvalRequest::health("health-probe")).expect("health request encodes");
        write_frame(&mut write, &frame).await?;
        let payload = FrameReader::new(read)
            .next_payload()
            .await?
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "no health reply"))?;
        let resp: EvalResponse =
            decode_payload(&payload).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Ok::<bool, io::Error>(resp.is_ok())
    };
    matches!(tokio::time::timeout(timeout, attempt).await, Ok(Ok(true)))
}

struct Connection {
    generation: u64,
    reader: FrameReader<OwnedReadHalf>,
    writer: OwnedWriteHalf,
}

impl Connection {
    async fn open(port: u16, generation: u64) -> io::Result<Self> {
        let stream = TcpStream::connect(("127.0.0.1", port)).await?;
        stream.set_nodelay(true)?;
        let (read, writer) = stream.into_split();
        Ok(Self {
            generation,
            reader: FrameReader::new(read),
            writer,
        })
    }

    async fn exchange(&mut self, frame: &[u8]) -> io::Result<Vec<u8>> {
        write_frame(&mut self.writer, frame).await?;
        self.reader.next_payload().await?.ok_or_else(|| {
            io::Error::new(io::ErrorKind::UnexpectedEof, "worker closed the connection")
        })
    }
}

pub(crate) type JobQueue = Arc<Mutex<mpsc::UnboundedReceiver<Job>>>;

/// Drains jobs for one worker over a single connection.
pub(crate) async fn run_lane(worker: Arc<WorkerHandle>, queue: JobQueue, eval_timeout: Duration) {
    let port = worker.port();
    let mut conn: Option<Connection> = None;
    loop {
        let Some(job) = queue.lock().await.recv().await else {
            return;
        };
        let Some(generation) = worker.ready_generation() else {
            conn = None;
            let _ = job.reply.send(Err((
                ErrorCode::WorkerUnavailable,
                format!("worker on port {port} is not ready"),
            )));
            continue;
        };
        if conn.as_ref().is_some_and(|c| c.generation != generation) {
            conn = None;
        }
        let outcome = tokio::time::timeout(eval_timeout, async {
            if conn.is_none() {
                conn = Some(Connection::open(port, generation).await?);
            }
            let frame = frame_payload(&job.payload)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            conn.as_mut()
                .expect("connection opened above")
                .exchange(&frame)
                .await
        })
        .await;
        let relay = match outcome {
            Ok(Ok(payload)) => check_reply(&job.id, payload),
            Ok(Err(e)) => {
                debug!(port, "worker exchange failed: {e}");
                conn = None;
                Err((
                    ErrorCode::WorkerUnavailable,
                    format!("worker on port {port} failed: {e}"),
                ))
            }
            Err(_) => {
                // a late reply would be misattributed, so drop the connection
                conn = None;
                Err((
                    ErrorCode::WorkerTimeout,
                    format!("no reply within {eval_timeout:?}"),
                ))
            }
        };
        let _ = job.reply.send(relay);
    }
}

fn check_reply(id: &str, payload: Vec<u8>) -> Relay {
    match decode_payload::<EvalResponse>(&payload) {
        Ok(resp) if resp.id == id => Ok(payload),
        Ok(resp) => Err((
            ErrorCode::Internal,
            format!("worker answered id `{}` for request `{id}`", resp.id),
        )),
        Err(e) => Err((
            ErrorCode::Internal,
            format!("worker sent a malformed response: {}", e.reason),
        )),
    }
}
