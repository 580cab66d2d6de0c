#![allow(dead_code)]

pub mod gen;
pub mod oracle;

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use bencher::client::{Client, ClientConfig};
use bencher::coordinator::{Coordinator, CoordinatorConfig};
use serde_json::json;
use tempfile::TempDir;

pub const BIN: &str = env!("CARGO_BIN_EXE_bencher");

pub fn builtin_registry_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("registry/builtin.json")
}

/// A port that was free a moment ago.
pub fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

/// Distinct free ports, held open together while chosen so they differ.
pub fn free_ports(n: usize) -> Vec<u16> {
    let held: Vec<TcpListener> = (0..n)
        .map(|_| TcpListener::bind("127.0.0.1:0").unwrap())
        .collect();
    held.iter()
        .map(|l| l.local_addr().unwrap().port())
        .collect()
}

pub fn write_registry(dir: &TempDir, registry: &serde_json::Value) -> PathBuf {
    let path = dir.path().join("registry.json");
    std::fs::write(&path, serde_json::to_string_pretty(registry).unwrap()).unwrap();
    path
}

/// The built-in benchmarks, moved to fresh worker ports so tests can run in
/// parallel.
pub fn builtin_registry_on_fresh_ports(dir: &TempDir) -> PathBuf {
    let text = std::fs::read_to_string(builtin_registry_path()).unwrap();
    let mut registry: serde_json::Value = serde_json::from_str(&text).unwrap();
    let ports = free_ports(2);
    for (_, entry) in registry.as_object_mut().unwrap() {
        let port = if entry["port"] == json!(50052) {
            ports[0]
        } else {
            ports[1]
        };
        entry["port"] = json!(port);
    }
    write_registry(dir, &registry)
}

/// Coordinator on an ephemeral port with the test binary standing in for
/// `bencher` in start commands.
pub fn test_config(registry: &Path) -> CoordinatorConfig {
    let mut config = CoordinatorConfig::new(registry);
    config.listen_port = 0;
    config.self_exe = Some(PathBuf::from(BIN));
    config
}

pub async fn start(config: CoordinatorConfig) -> Coordinator {
    Coordinator::start(config)
        .await
        .expect("coordinator starts")
}

pub fn client_for(port: u16) -> Client {
    Client::new(ClientConfig {
        connect_retries: 0,
        eval_timeout: Duration::from_secs(60),
        ..ClientConfig::default().with_port(port)
    })
    .unwrap()
}

/// Runs blocking client code off the async runtime.
pub async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.unwrap()
}

/// Polls `cond` every 20 ms until it holds or `timeout` passes.
pub async fn wait_until(timeout: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let deadline = tokio::time::Instant::now() + timeout;
    while tokio::time::Instant::now() < deadline {
        if cond() {
            return true;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    cond()
}
