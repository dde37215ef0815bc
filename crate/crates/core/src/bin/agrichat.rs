use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use log::{error, warn};

use agrichat::config::{FarmConfig, ServiceConfig};
use agrichat::gateway::Gateway;
use agrichat::orchestrator::Orchestrator;
use agrichat::replay::{self, ReplayError, ReplayOptions, ReplayScript};
use agrichat::server;
use agrichat::store::{Durability, Store, StoreError, Stream};

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "agrichat", version, about = "Smart-farm chatbot service for a lettuce plot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP gateway with a wall-clock tick loop.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Data directory for the append-only logs.
        #[arg(long)]
        data: PathBuf,
        /// Farm config file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Wall-clock milliseconds between ticks.
        #[arg(long, default_value_t = 1000)]
        tick_ms: u64,
        /// Simulated clock start (unix seconds); defaults to now.
        #[arg(long)]
        start_ts: Option<i64>,
    },
    /// Run a scripted scenario on the simulated clock.
    Replay {
        #[arg(long)]
        script: PathBuf,
        /// Where to write the outbound transcript.
        #[arg(long)]
        out: PathBuf,
        /// Also write the four logs here.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the frames of one stream within a timestamp range.
    Dump {
        /// sessions, telemetry, transcript or audit
        stream: Stream,
        #[arg(long, default_value = "0", value_parser = parse_ts)]
        from: i64,
        #[arg(long, default_value = "MAX", value_parser = parse_ts)]
        to: i64,
        #[arg(long)]
        data: PathBuf,
    },
}

fn parse_ts(s: &str) -> Result<i64, String> {
    if s.eq_ignore_ascii_case("max") {
        Ok(i64::MAX)
    } else {
        s.parse().map_err(|e| format!("{s:?}: {e}"))
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }
}

fn store_failure(e: StoreError) -> Failure {
    let code = match e {
        StoreError::BadRange { .. } => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    };
    Failure::new(code, e)
}

fn load_config(path: Option<&PathBuf>) -> Result<ServiceConfig, Failure> {
    match path {
        Some(p) => FarmConfig::load(p)
            .and_then(|c| c.resolve())
            .map_err(|e| Failure::new(EXIT_CONFIG, e)),
        None => Ok(ServiceConfig::default()),
    }
}

fn serve(
    port: u16,
    data: PathBuf,
    config: Option<PathBuf>,
    seed: Option<u64>,
    tick_ms: u64,
    start_ts: Option<i64>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config.as_ref())?;
    if let Some(seed) = seed {
        cfg.sim.seed = seed;
    }
    if tick_ms == 0 {
        return Err(Failure::new(EXIT_USAGE, "--tick-ms must be at least 1"));
    }
    let store = Store::open(&data, Durability::Sync).map_err(store_failure)?;
    for w in store.warnings() {
        warn!("{w}");
    }
    let now = start_ts.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs() as i64)
    });
    let allowlist = cfg.allowlist.clone();
    let gw = Arc::new(Mutex::new(Gateway::new(Orchestrator::new(cfg, now, store), allowlist)));

    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_RUNTIME, e))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
            .await
            .map_err(|e| Failure::new(EXIT_RUNTIME, format!("bind port {port}: {e}")))?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        server::serve(listener, gw, Duration::from_millis(tick_ms), shutdown)
            .await
            .map_err(|e| Failure::new(EXIT_RUNTIME, e))
    })
}

fn replay_cmd(
    script: PathBuf,
    out: PathBuf,
    data: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let script = ReplayScript::load(&script).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let opts = ReplayOptions {
        seed,
        data_dir: data,
        durability: Durability::Flush,
    };
    let outcome = replay::run(&script, &opts).map_err(|e| {
        let code = match e {
            ReplayError::Script { .. } | ReplayError::Config(_) | ReplayError::Sim(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        Failure::new(code, e)
    })?;
    fs::write(&out, outcome.transcript())
        .map_err(|e| Failure::new(EXIT_RUNTIME, format!("{}: {e}", out.display())))?;
    for e in outcome.gateway.errors() {
        warn!("{e}");
    }
    Ok(())
}

fn dump(stream: Stream, from: i64, to: i64, data: PathBuf) -> Result<(), Failure> {
    let store = Store::open_read_only(&data).map_err(store_failure)?;
    for w in store.warnings() {
        warn!("{w}");
    }
    let records = store.query(stream, from, to).map_err(store_failure)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for r in records {
        writeln!(out, "{}", r.body).map_err(|e| Failure::new(EXIT_RUNTIME, e))?;
    }
    out.flush().map_err(|e| Failure::new(EXIT_RUNTIME, e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Serve {
            port,
            data,
            config,
            seed,
            tick_ms,
            start_ts,
        } => serve(port, data, config, seed, tick_ms, start_ts),
        Command::Replay {
            script,
            out,
            data,
            seed,
        } => replay_cmd(script, out, data, seed),
        Command::Dump {
            stream,
            from,
            to,
            data,
        } => dump(stream, from, to, data),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            error!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
