mod common;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use bencher::coordinator::{RestartPolicy, WorkerState};
use bencher::wire::{ErrorCode, EvalRequest, Value, ValueKind};
use bencher::worker::{self, BenchmarkDefinition, BenchmarkSet};
use bencher::Direction;
use common::*;
use serde_json::json;

fn kill(pid: u32) {
    // SAFETY: kill(2) on a child of this test's coordinator
    unsafe {
        libc::kill(pid as libc::pid_t, libc::SIGKILL);
    }
}

fn alive(pid: u32) -> bool {
    // SAFETY: signal 0 only checks for existence
    unsafe { libc::kill(pid as libc::pid_t, 0) == 0 }
}

fn sphere_registry(
    dir: &tempfile::TempDir,
    port: u16,
    start_command: serde_json::Value,
) -> std::path::PathBuf {
    write_registry(
        dir,
        &json!({"bbob-sphere": {"port": port, "dimensions": 10, "type": "purely_continuous",
                                "start_command": start_command}}),
    )
}

fn sphere_at_center(id: &str) -> EvalRequest {
    EvalRequest::evaluate(id, "bbob-sphere", vec![Value::continuous(0.5); 10])
}

#[tokio::test(flavor = "multi_thread")]
async fn crashed_worker_restarts_then_stops_after_budget() {
    let dir = tempfile::tempdir().unwrap();
    let wport = free_port();
    let mut config = test_config(&sphere_registry(&dir, wport, json!(["bencher", "worker"])));
    config.restart = RestartPolicy {
        initial_backoff: Duration::from_millis(50),
        max_backoff: Duration::from_millis(400),
        ..RestartPolicy::default()
    };
    config.probe_interval = Duration::from_millis(20);
    let coord = start(config).await;
    let first = coord.worker(wport).unwrap();
    assert_eq!(first.state, WorkerState::Ready);

    kill(first.pid.unwrap());
    let resp = coord.route(&sphere_at_center("after-kill")).await;
    assert_eq!(resp.error_code, Some(ErrorCode::WorkerUnavailable));

    assert!(
        wait_until(Duration::from_secs(10), || {
            let s = coord.worker(wport).unwrap();
            s.state == WorkerState::Ready && s.generation > first.generation
        })
        .await
    );
    let second = coord.worker(wport).unwrap();
    assert_ne!(second.pid, first.pid);
    assert_eq!(second.restart_count, 1);
    let resp = coord.route(&sphere_at_center("after-restart")).await;
    assert_eq!(resp.result, Some(0.0));

    // kill every incarnation as soon as it is ready
    let mut kills = 1;
    while coord.worker(wport).unwrap().state != WorkerState::Stopped {
        let s = coord.worker(wport).unwrap();
        if let (WorkerState::Ready, Some(pid)) = (s.state, s.pid) {
            kill(pid);
            kills += 1;
            assert!(
                wait_until(Duration::from_secs(5), || coord.worker(wport).unwrap().pid
                    != Some(pid))
                .await
            );
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert_eq!(kills, 6);
    let end = coord.worker(wport).unwrap();
    assert_eq!(end.restart_count, 5);
    assert_eq!(end.pid, None);
    tokio::time::sleep(Duration::from_millis(600)).await;
    assert_eq!(coord.worker(wport).unwrap().restart_count, 5);
    let resp = coord.route(&sphere_at_center("stopped")).await;
    assert_eq!(resp.error_code, Some(ErrorCode::WorkerUnavailable));
    coord.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn worker_that_cannot_start_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let wport = free_port();
    let mut config = test_config(&sphere_registry(&dir, wport, json!(["false"])));
    config.restart = RestartPolicy {
        initial_backoff: Duration::from_millis(20),
        ..RestartPolicy::default()
    };
    let coord = start(config).await;
    let resp = coord.route(&sphere_at_center("x")).await;
    assert_eq!(resp.error_code, Some(ErrorCode::WorkerUnavailable));
    assert!(
        wait_until(Duration::from_secs(5), || coord
            .worker(wport)
            .unwrap()
            .state
            == WorkerState::Stopped)
        .await
    );
    coord.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn shutdown_is_idempotent_and_reaps_workers() {
    let dir = tempfile::tempdir().unwrap();
    let path = builtin_registry_on_fresh_ports(&dir);
    let coord = start(test_config(&path)).await;
    let pids: Vec<u32> = coord.workers().iter().map(|w| w.pid.unwrap()).collect();
    let port = coord.port();
    let started = Instant::now();
    tokio::join!(coord.shutdown(), coord.shutdown());
    coord.shutdown().await;
    assert!(started.elapsed() < Duration::from_secs(5));
    assert!(pids.iter().all(|&pid| !alive(pid)));
    assert!(coord
        .workers()
        .iter()
        .all(|w| w.state == WorkerState::Stopped));
    assert!(std::net::TcpStream::connect(("127.0.0.1", port)).is_err());
}

#[tokio::test(flavor = "multi_thread")]
async fn shutdown_answers_in_flight_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let wport = free_port();
    let def = BenchmarkDefinition::new("tenth", 1, ValueKind::Continuous, Direction::Min, |x| {
        std::thread::sleep(Duration::from_millis(100));
        x[0]
    });
    let _w = worker::serve(BenchmarkSet::new([def]).unwrap(), wport)
        .await
        .unwrap();
    let path = write_registry(
        &dir,
        &json!({"tenth": {"port": wport, "dimensions": 1, "type": "purely_continuous"}}),
    );
    let coord = start(test_config(&path)).await;
    let port = coord.port();
    let pending = tokio::spawn(blocking(move || {
        client_for(port).evaluate_point("tenth", &[Value::continuous(0.75)])
    }));
    tokio::time::sleep(Duration::from_millis(30)).await;
    let started = Instant::now();
    coord.shutdown().await;
    assert_eq!(pending.await.unwrap().unwrap(), 0.75);
    assert!(started.elapsed() < Duration::from_secs(2));
}

#[tokio::test(flavor = "multi_thread")]
async fn shutdown_abandons_hung_plugin_after_grace() {
    let dir = tempfile::tempdir().unwrap();
    let wport = free_port();
    let release = Arc::new(AtomicBool::new(false));
    let gate = release.clone();
    let def =
        BenchmarkDefinition::new("hang", 1, ValueKind::Continuous, Direction::Min, move |x| {
            while !gate.load(Ordering::SeqCst) {
                std::thread::sleep(Duration::from_millis(20));
            }
            x[0]
        });
    let _w = worker::serve(BenchmarkSet::new([def]).unwrap(), wport)
        .await
        .unwrap();
    let path = write_registry(
        &dir,
        &json!({"hang": {"port": wport, "dimensions": 1, "type": "purely_continuous"}}),
    );
    let coord = start(test_config(&path)).await;
    let port = coord.port();
    let pending = tokio::spawn(blocking(move || {
        client_for(port).evaluate_point("hang", &[Value::continuous(0.5)])
    }));
    tokio::time::sleep(Duration::from_millis(100)).await;
    let started = Instant::now();
    coord.shutdown().await;
    let took = started.elapsed();
    let err = pending.await.unwrap().unwrap_err();
    release.store(true, Ordering::SeqCst);
    assert!(
        took >= Duration::from_secs(5) && took < Duration::from_secs(10),
        "{took:?}"
    );
    assert_eq!(err.code(), Some(ErrorCode::WorkerUnavailable), "{err:?}");
}

#[tokio::test(flavor = "multi_thread")]
async fn shutdown_force_kills_worker_ignoring_sigterm() {
    let dir = tempfile::tempdir().unwrap();
    let wport = free_port();
    let script = format!("trap '' TERM; exec '{BIN}' worker --delay-ms 1000000");
    let coord = start(test_config(&sphere_registry(
        &dir,
        wport,
        json!(["sh", "-c", script]),
    )))
    .await;
    let pid = coord.worker(wport).unwrap().pid.unwrap();
    let port = coord.port();
    let pending = tokio::spawn(blocking(move || {
        client_for(port).evaluate_point("bbob-sphere", &[Value::continuous(0.5); 10])
    }));
    tokio::time::sleep(Duration::from_millis(100)).await;
    let started = Instant::now();
    coord.shutdown().await;
    let took = started.elapsed();
    assert!(!alive(pid));
    // 5 s grace for the in-flight request, then 5 s between SIGTERM and SIGKILL
    assert!(
        took >= Duration::from_secs(10) && took < Duration::from_millis(10_500),
        "{took:?}"
    );
    assert_eq!(
        pending.await.unwrap().unwrap_err().code(),
        Some(ErrorCode::WorkerUnavailable)
    );
}
