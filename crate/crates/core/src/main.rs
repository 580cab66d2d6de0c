use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use tracing::{info, warn};
use tracing_subscriber::EnvFilter;

use bencher::bench;
use bencher::client::{BenchmarkInfo, Client, ClientConfig, ClientError};
use bencher::coordinator::{Coordinator, CoordinatorConfig, REGISTRY_ENV, WORKER_PORT_ENV};
use bencher::registry::Registry;
use bencher::wire::{Value, ValueKind};
use bencher::worker::{self, BenchmarkDefinition, BenchmarkSet, Objective};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Smoke runs keep at most this many workers busy at once.
const SMOKE_PARALLELISM: usize = 8;

#[derive(Parser)]
#[command(
    name = "bencher",
    version,
    about = "Black-box optimization benchmark service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a coordinator until interrupted.
    Serve {
        #[arg(long)]
        registry: PathBuf,
        /// Listen port (default 50051, or BENCHER_PORT).
        #[arg(long)]
        port: Option<u16>,
    },
    /// Evaluate one point and print the result.
    Eval(EvalArgs),
    /// List the benchmarks a coordinator serves.
    List,
    /// Evaluate a canonical point on every benchmark.
    Smoke {
        /// Start a private coordinator from this registry instead of using a
        /// running one.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Host built-in benchmarks on a worker port.
    Worker(WorkerArgs),
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    benchmark: String,
    /// Comma-separated coordinates.
    #[arg(long, conflicts_with = "center", required_unless_present = "center")]
    point: Option<String>,
    /// Evaluate at the canonical center point.
    #[arg(long)]
    center: bool,
}

#[derive(Args)]
struct WorkerArgs {
    #[arg(long, env = WORKER_PORT_ENV)]
    port: u16,
    /// Host the built-in entries of this registry assigned to `--port`, at
    /// their registered dimensions.
    #[arg(long, env = REGISTRY_ENV)]
    registry: Option<PathBuf>,
    /// Host only these benchmarks (at default dimensions unless a registry
    /// says otherwise).
    #[arg(long = "benchmark")]
    benchmarks: Vec<String>,
    /// Artificial latency added to every evaluation, in milliseconds.
    #[arg(long, default_value_t = 0)]
    delay_ms: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve { .. } | Command::Worker(_)) {
        "info"
    } else {
        "warn"
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)),
        )
        .init();

    match cli.command {
        Command::Serve { registry, port } => cmd_serve(registry, port),
        Command::Eval(args) => cmd_eval(args),
        Command::List => cmd_list(),
        Command::Smoke { registry } => cmd_smoke(registry),
        Command::Worker(args) => cmd_worker(args),
    }
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime")
}

fn coordinator_config(registry: PathBuf) -> Result<CoordinatorConfig, String> {
    let mut config = CoordinatorConfig::new(registry)
        .with_env_overrides()
        .map_err(|e| e.to_string())?;
    config.self_exe = std::env::current_exe().ok();
    Ok(config)
}

fn cmd_serve(registry: PathBuf, port: Option<u16>) -> ExitCode {
    let mut config = match coordinator_config(registry) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if let Some(port) = port {
        config.listen_port = port;
    }
    let rt = runtime();
    rt.block_on(async {
        let coordinator = match Coordinator::start(config).await {
            Ok(c) => c,
            Err(e) => return config_error(e),
        };
        wait_for_signal().await;
        coordinator.shutdown().await;
        ExitCode::SUCCESS
    })
}

async fn wait_for_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
    info!("shutdown requested");
}

fn config_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn failure(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_FAILURE)
}

fn client() -> Result<Client, ClientError> {
    Client::new(ClientConfig::from_env()?)
}

/// Domain-valid constant point: 0.5 per continuous coordinate, index 0
/// otherwise.
fn canonical_point(kind: ValueKind, dimensions: usize) -> Vec<Value> {
    let value = if kind == ValueKind::Continuous {
        0.5
    } else {
        0.0
    };
    vec![Value::new(kind, value); dimensions]
}

fn parse_point(csv: &str, kind: ValueKind) -> Result<Vec<Value>, String> {
    csv.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map(|v| Value::new(kind, v))
                .map_err(|_| format!("`{}` is not a number", s.trim()))
        })
        .collect()
}

fn print_client_error(e: &ClientError) {
    match e.code() {
        Some(code) => eprintln!("{code}: {e}"),
        None => eprintln!("error: {e}"),
    }
}

fn cmd_eval(args: EvalArgs) -> ExitCode {
    let mut client = match client() {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let entry = match client.describe(&args.benchmark) {
        Ok(entry) => entry,
        Err(e) => {
            print_client_error(&e);
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let kind = entry
        .get("type")
        .and_then(|t| serde_json::from_value::<bencher::registry::BenchmarkType>(t.clone()).ok())
        .map(|t| t.value_kind());
    let dimensions = entry.get("dimensions").and_then(|d| d.as_u64());
    let (Some(kind), Some(dimensions)) = (kind, dimensions) else {
        return failure(format!("unexpected describe payload: {entry}"));
    };
    let values = match (&args.point, args.center) {
        (Some(csv), _) => match parse_point(csv, kind) {
            Ok(v) => v,
            Err(e) => return config_error(e),
        },
        (None, _) => canonical_point(kind, dimensions as usize),
    };
    match client.evaluate_point(&args.benchmark, &values) {
        Ok(result) => {
            println!("{result}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            print_client_error(&e);
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn cmd_list() -> ExitCode {
    let mut client = match client() {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    match client.list_benchmarks() {
        Ok(rows) => {
            for row in rows {
                println!(
                    "{} {} {} {}",
                    row.name, row.dimensions, row.kind, row.direction
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            print_client_error(&e);
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn cmd_smoke(registry: Option<PathBuf>) -> ExitCode {
    let Some(path) = registry else {
        return match client() {
            Ok(c) => run_smoke(c.config().clone()),
            Err(e) => config_error(e),
        };
    };
    let mut config = match coordinator_config(path) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    config.listen_port = 0;
    let rt = runtime();
    let coordinator = match rt.block_on(Coordinator::start(config)) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let client_config = ClientConfig {
        host: "127.0.0.1".into(),
        ..ClientConfig::default()
    }
    .with_port(coordinator.port());
    let code = run_smoke(client_config);
    rt.block_on(coordinator.shutdown());
    code
}

fn run_smoke(config: ClientConfig) -> ExitCode {
    let rows = match Client::new(config.clone()).and_then(|mut c| c.list_benchmarks()) {
        Ok(rows) => rows,
        Err(e) => {
            print_client_error(&e);
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    // one thread per worker, so benchmarks of one worker stay sequential
    let mut groups: BTreeMap<Option<u16>, Vec<BenchmarkInfo>> = BTreeMap::new();
    for row in rows {
        groups.entry(row.port).or_default().push(row);
    }
    let groups: Vec<Vec<BenchmarkInfo>> = groups.into_values().collect();
    let mut lines: BTreeMap<String, (bool, String)> = BTreeMap::new();
    for batch in groups.chunks(SMOKE_PARALLELISM) {
        let results = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .iter()
                .map(|group| {
                    let config = config.clone();
                    scope.spawn(move || smoke_group(config, group))
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("smoke thread panicked"))
                .collect::<Vec<_>>()
        });
        lines.extend(
            results
                .into_iter()
                .map(|(name, ok, text)| (name, (ok, text))),
        );
    }
    let mut all_ok = true;
    for (name, (ok, text)) in &lines {
        all_ok &= ok;
        println!("{name} {} {text}", if *ok { "OK" } else { "FAIL" });
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    }
}

fn smoke_group(config: ClientConfig, group: &[BenchmarkInfo]) -> Vec<(String, bool, String)> {
    let mut client = match Client::new(config) {
        Ok(c) => c,
        Err(e) => {
            return group
                .iter()
                .map(|b| (b.name.clone(), false, failure_token(&e)))
                .collect()
        }
    };
    group
        .iter()
        .map(
            |b| match client.evaluate_point(&b.name, &canonical_point(b.kind, b.dimensions)) {
                Ok(value) => (b.name.clone(), true, value.to_string()),
                Err(e) => (b.name.clone(), false, failure_token(&e)),
            },
        )
        .collect()
}

fn failure_token(e: &ClientError) -> String {
    match e.code() {
        Some(code) => code.to_string(),
        None => "connection_error".to_owned(),
    }
}

fn cmd_worker(args: WorkerArgs) -> ExitCode {
    let definitions = match worker_definitions(&args) {
        Ok(d) => d,
        Err(e) => return config_error(e),
    };
    let definitions: Vec<BenchmarkDefinition> = if args.delay_ms > 0 {
        let delay = Duration::from_millis(args.delay_ms);
        definitions
            .into_iter()
            .map(|d| d.map_objective(|f| delayed(f, delay)))
            .collect()
    } else {
        definitions
    };
    let set = match BenchmarkSet::new(definitions) {
        Ok(s) => s,
        Err(e) => return config_error(e),
    };
    let names: Vec<String> = set.names().map(str::to_owned).collect();
    let rt = runtime();
    rt.block_on(async {
        let server = match worker::serve(set, args.port).await {
            Ok(s) => s,
            Err(e) => return config_error(e),
        };
        info!(port = server.port(), benchmarks = ?names, "worker listening");
        server.wait().await;
        ExitCode::SUCCESS
    })
}

fn delayed(f: Objective, delay: Duration) -> Objective {
    Arc::new(move |x| {
        std::thread::sleep(delay);
        f(x)
    })
}

fn worker_definitions(args: &WorkerArgs) -> Result<Vec<BenchmarkDefinition>, String> {
    let registry = args
        .registry
        .as_ref()
        .map(Registry::load_file)
        .transpose()
        .map_err(|e| e.to_string())?;

    // (name, dimensions) pairs to host
    let wanted: Vec<(String, usize)> = match (&registry, args.benchmarks.is_empty()) {
        (Some(reg), true) => reg
            .on_port(args.port)
            .map(|e| (e.name.clone(), e.dimensions))
            .collect(),
        (reg, _) => {
            let names = if args.benchmarks.is_empty() {
                bench::core_names()
            } else {
                args.benchmarks.clone()
            };
            names
                .into_iter()
                .map(|name| {
                    let dims = reg
                        .as_ref()
                        .and_then(|r| r.lookup(&name).ok())
                        .map(|e| e.dimensions)
                        .or_else(|| bench::default_dimensions(&name))
                        .ok_or_else(|| format!("no built-in benchmark named `{name}`"))?;
                    Ok((name, dims))
                })
                .collect::<Result<_, String>>()?
        }
    };
    let mut definitions = Vec::new();
    for (name, dims) in wanted {
        match bench::definition(&name, dims) {
            Ok(d) => definitions.push(d),
            // registry entries on this port may belong to a plugin this binary cannot host
            Err(bench::CatalogError::Unknown(_))
                if registry.is_some() && args.benchmarks.is_empty() =>
            {
                warn!(%name, "not a built-in benchmark, skipping");
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(definitions)
}
