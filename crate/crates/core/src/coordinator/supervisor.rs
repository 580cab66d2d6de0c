//! Worker lifecycle: state tracking, restart backoff and the tasks that keep
//! spawned and external workers under observation.

use std::path::PathBuf;
use std::process::Stdio;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::Serialize;
use tokio::process::{Child, Command};
use tokio::sync::watch;
use tracing::{info, warn};

use super::dispatch::probe_health;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkerState {
    Starting,
    Ready,
    Crashed,
    Stopped,
}

#[derive(Debug, Clone)]
pub struct RestartPolicy {
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    /// Consecutive restarts allowed before the worker is stopped for good.
    pub max_restarts: u32,
    /// Time spent ready after which the crash streak is forgotten.
    pub stable_after: Duration,
}

impl Default for RestartPolicy {
    fn default() -> Self {
        Self {
            initial_backoff: Duration::from_secs(1),
            max_backoff: Duration::from_secs(60),
            max_restarts: 5,
            stable_after: Duration::from_secs(600),
        }
    }
}

/// Exponential restart backoff over a streak of consecutive crashes.
#[derive(Debug, Clone)]
pub struct Backoff {
    policy: RestartPolicy,
    streak: u32,
    next_delay: Duration,
}

impl Backoff {
    pub fn new(policy: RestartPolicy) -> Self {
        let next_delay = policy.initial_backoff;
        Self {
            policy,
            streak: 0,
            next_delay,
        }
    }

    /// Records a crash after the worker spent `ready_for` in the ready state.
    /// Returns the delay before the next restart, or `None` once the restart
    /// budget is exhausted.
    pub fn on_crash(&mut self, ready_for: Duration) -> Option<Duration> {
        if ready_for >= self.policy.stable_after {
            self.streak = 0;
            self.next_delay = self.policy.initial_backoff;
        }
        if self.streak >= self.policy.max_restarts {
            return None;
        }
        self.streak += 1;
        let delay = self.next_delay;
        self.next_delay = (self.next_delay * 2).min(self.policy.max_backoff);
        Some(delay)
    }

    /// Restarts granted in the current streak.
    pub fn streak(&self) -> u32 {
        self.streak
    }
}

/// Coordinator-side view of one worker.
#[derive(Debug, Clone, Serialize)]
pub struct WorkerSnapshot {
    pub port: u16,
    pub state: WorkerState,
    pub restart_count: u32,
    #[serde(skip)]
    pub last_health_ok: Option<Instant>,
    pub pid: Option<u32>,
    /// Bumped every time the worker becomes ready, so pooled connections to
    /// an earlier incarnation can be recognised.
    #[serde(skip)]
    pub generation: u64,
    pub spawned: bool,
}

#[derive(Debug)]
pub struct WorkerHandle {
    inner: Mutex<WorkerSnapshot>,
}

impl WorkerHandle {
    pub fn new(port: u16, spawned: bool) -> Self {
        Self {
            inner: Mutex::new(WorkerSnapshot {
                port,
                state: WorkerState::Starting,
                restart_count: 0,
                last_health_ok: None,
                pid: None,
                generation: 0,
                spawned,
            }),
        }
    }

    pub fn snapshot(&self) -> WorkerSnapshot {
        self.lock().clone()
    }

    pub fn port(&self) -> u16 {
        self.lock().port
    }

    /// Generation if the worker is ready.
    pub fn ready_generation(&self) -> Option<u64> {
        let s = self.lock();
        (s.state == WorkerState::Ready).then_some(s.generation)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, WorkerSnapshot> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn mark_ready(&self) {
        let mut s = self.lock();
        if s.state != WorkerState::Ready {
            s.generation += 1;
        }
        s.state = WorkerState::Ready;
        s.last_health_ok = Some(Instant::now());
    }

    fn set_state(&self, state: WorkerState) {
        let mut s = self.lock();
        // stopped is terminal
        if s.state != WorkerState::Stopped {
            s.state = state;
        }
    }

    fn set_pid(&self, pid: Option<u32>) {
        self.lock().pid = pid;
    }

    fn bump_restarts(&self) {
        let mut s = self.lock();
        s.restart_count += 1;
    }
}

#[derive(Debug, Clone)]
pub struct Timing {
    pub ready_timeout: Duration,
    pub probe_interval: Duration,
    pub health_interval: Duration,
    pub kill_grace: Duration,
}

#[derive(Debug, Clone)]
pub struct SpawnSpec {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub env: Vec<(String, String)>,
}

/// Polls the worker's health endpoint until it answers or `timeout` passes.
async fn wait_ready(port: u16, timing: &Timing) -> bool {
    let deadline = tokio::time::Instant::now() + timing.ready_timeout;
    loop {
        if probe_health(port, timing.probe_interval.max(Duration::from_millis(500))).await {
            return true;
        }
        if tokio::time::Instant::now() >= deadline {
            return false;
        }
        tokio::time::sleep(timing.probe_interval).await;
    }
}

/// Keeps a spawned worker running, restarting it with backoff after exits.
pub(crate) async fn supervise(
    handle: Arc<WorkerHandle>,
    spec: SpawnSpec,
    policy: RestartPolicy,
    timing: Timing,
    mut shutdown: watch::Receiver<bool>,
) {
    let port = handle.port();
    let mut backoff = Backoff::new(policy);
    loop {
        handle.set_state(WorkerState::Starting);
        let mut ready_for = Duration::ZERO;
        match spawn(&spec) {
            Ok(mut child) => {
                handle.set_pid(child.id());
                info!(port, pid = child.id(), "worker spawned");
                let ready = tokio::select! {
                    ok = wait_ready(port, &timing) => ok,
                    status = child.wait() => {
                        warn!(port, ?status, "worker exited before becoming ready");
                        false
                    }
                    _ = shutdown.changed() => {
                        terminate(&mut child, timing.kill_grace).await;
                        handle.set_state(WorkerState::Stopped);
                        return;
                    }
                };
                if ready {
                    handle.mark_ready();
                    info!(port, "worker ready");
                    let since = Instant::now();
                    tokio::select! {
                        status = child.wait() => warn!(port, ?status, "worker exited"),
                        _ = shutdown.changed() => {
                            terminate(&mut child, timing.kill_grace).await;
                            handle.set_state(WorkerState::Stopped);
                            return;
                        }
                    }
                    ready_for = since.elapsed();
                } else {
                    warn!(port, timeout = ?timing.ready_timeout, "worker never became ready");
                    let _ = child.start_kill();
                    let _ = child.wait().await;
                }
            }
            Err(e) => warn!(port, program = %spec.program.display(), "cannot spawn worker: {e}"),
        }
        handle.set_pid(None);
        handle.set_state(WorkerState::Crashed);
        let Some(delay) = backoff.on_crash(ready_for) else {
            warn!(port, "restart budget exhausted, worker stopped");
            handle.set_state(WorkerState::Stopped);
            return;
        };
        info!(
            port,
            ?delay,
            attempt = backoff.streak(),
            "restarting worker after backoff"
        );
        tokio::select! {
            _ = tokio::time::sleep(delay) => {}
            _ = shutdown.changed() => {
                handle.set_state(WorkerState::Stopped);
                return;
            }
        }
        handle.bump_restarts();
    }
}

/// Tracks an externally started worker through periodic health probes.
pub(crate) async fn monitor(
    handle: Arc<WorkerHandle>,
    timing: Timing,
    mut shutdown: watch::Receiver<bool>,
) {
    let port = handle.port();
    let started = tokio::time::Instant::now();
    loop {
        let healthy =
            probe_health(port, timing.probe_interval.max(Duration::from_millis(500))).await;
        let state = handle.snapshot().state;
        if healthy {
            if state != WorkerState::Ready {
                info!(port, "external worker ready");
            }
            handle.mark_ready();
        } else if state == WorkerState::Ready {
            warn!(port, "external worker stopped answering health probes");
            handle.set_state(WorkerState::Crashed);
        } else if state == WorkerState::Starting && started.elapsed() >= timing.ready_timeout {
            warn!(port, "external worker never became ready");
            handle.set_state(WorkerState::Crashed);
        }
        let interval = if handle.snapshot().state == WorkerState::Ready {
            timing.health_interval
        } else {
            timing.probe_interval
        };
        tokio::select! {
            _ = tokio::time::sleep(interval) => {}
            _ = shutdown.changed() => {
                handle.set_state(WorkerState::Stopped);
                return;
            }
        }
    }
}

fn spawn(spec: &SpawnSpec) -> std::io::Result<Child> {
    let mut cmd = Command::new(&spec.program);
    cmd.args(&spec.args)
        .envs(spec.env.iter().map(|(k, v)| (k.as_str(), v.as_str())))
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::inherit())
        .kill_on_drop(true);
    cmd.spawn()
}

/// Asks the child to exit, then kills it if it is still around after
/// `grace`.
pub(crate) async fn terminate(child: &mut Child, grace: Duration) {
    if let Some(pid) = child.id() {
        send_sigterm(pid);
        if tokio::time::timeout(grace, child.wait()).await.is_ok() {
            return;
        }
        warn!(pid, "worker ignored SIGTERM, killing");
    }
    let _ = child.start_kill();
    let _ = child.wait().await;
}

#[cfg(unix)]
fn send_sigterm(pid: u32) {
    // SAFETY: plain kill(2) on a pid we spawned and have not yet reaped.
    unsafe {
        libc::kill(pid as libc::pid_t, libc::SIGTERM);
    }
}

#[cfg(not(unix))]
fn send_sigterm(_pid: u32) {}
