//! `ypsp` command line.
//!
//! Exit codes: 0 ok, 1 usage or empty query, 2 config, data or query
//! error, 3 runtime or bind failure.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use ypsp_core::ingest::NTriplesError;

use crate::config::Config;
use crate::federation::fanout;
use crate::service::{self, ApiError, AppState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ypsp", version, about = "Semantic yellow-pages directory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Unified TOML config (YPSP_* variables override its keys)
    #[arg(long, env = "YPSP_CONFIG")]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serve the HTTP API
    Serve(ConfigArg),
    /// Run one query against the configured store
    Query {
        #[command(flatten)]
        config: ConfigArg,
        /// SPARQL query file ("-" for stdin)
        #[arg(long, conflicts_with = "structured", required_unless_present = "structured")]
        file: Option<PathBuf>,
        /// Structured search as JSON, or @path to a JSON file
        #[arg(long)]
        structured: Option<String>,
    },
    /// Check an N-Triples file and count what it holds
    Load {
        file: PathBuf,
        /// Also load the configured data first, to check for clashes
        #[arg(long, env = "YPSP_CONFIG")]
        config: Option<PathBuf>,
    },
    /// Write the configured store as sorted N-Triples
    Export {
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Send a SPARQL query to the configured endpoints and merge the answers
    Federate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        file: PathBuf,
        /// Only ask endpoints serving this class
        #[arg(long)]
        class: Option<String>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl std::fmt::Display) -> Self {
        Failure { code, message: message.to_string() }
    }
}

impl From<crate::config::ConfigError> for Failure {
    fn from(e: crate::config::ConfigError) -> Self {
        Failure::new(EXIT_DATA, e)
    }
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        let code = if e.status.is_server_error() { EXIT_RUNTIME } else { EXIT_DATA };
        let mut message = e.message().to_string();
        if let (Some(line), Some(col)) = (e.body["line"].as_u64(), e.body["column"].as_u64()) {
            message = format!("line {line}, column {col}: {message}");
        }
        if let Some(v) = e.body["violations"].as_array() {
            for x in v {
                message.push_str(&format!("\n  {}", x.as_str().map(String::from).unwrap_or_else(|| x.to_string())));
            }
        }
        Failure::new(code, message)
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::new(EXIT_RUNTIME, e))
}

fn read_text(path: &PathBuf) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s).map_err(|e| Failure::new(EXIT_DATA, e))?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))
}

fn state_for(config: &Config) -> Result<std::sync::Arc<AppState>, Failure> {
    let dir = config.build_directory()?;
    Ok(AppState::new(dir, Duration::from_millis(config.writer_timeout_ms), config.endpoints.clone()))
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let write_out = |out: &mut dyn Write, bytes: &[u8]| out.write_all(bytes).map_err(|e| Failure::new(EXIT_RUNTIME, e));
    match cli.command {
        Command::Serve(c) => {
            let config = Config::load(&c.config)?;
            let state = state_for(&config)?;
            let addr: SocketAddr = format!("{}:{}", config.bind, config.port)
                .parse()
                .map_err(|e| Failure::new(EXIT_DATA, format!("bind address: {e}")))?;
            runtime()?.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .map_err(|e| Failure::new(EXIT_RUNTIME, format!("cannot bind {addr}: {e}")))?;
                let _ = writeln!(err, "listening on http://{}", listener.local_addr().unwrap_or(addr));
                axum::serve(listener, service::router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(|e| Failure::new(EXIT_RUNTIME, e))
            })
        }
        Command::Query { config, file, structured } => {
            let config = Config::load(&config.config)?;
            let state = state_for(&config)?;
            let body = runtime()?.block_on(async {
                match (file, structured) {
                    (Some(path), _) => {
                        let text = read_text(&path)?;
                        if text.trim().is_empty() {
                            return Err(Failure::new(EXIT_USAGE, "empty query"));
                        }
                        Ok(service::sparql_body(&state, &text).await?)
                    }
                    (None, Some(json)) => {
                        let json = match json.strip_prefix('@') {
                            Some(path) => read_text(&PathBuf::from(path))?,
                            None => json,
                        };
                        if json.trim().is_empty() {
                            return Err(Failure::new(EXIT_USAGE, "empty query"));
                        }
                        Ok(service::search_body(&state, json.as_bytes()).await?)
                    }
                    (None, None) => Err(Failure::new(EXIT_USAGE, "give --file or --structured")),
                }
            })?;
            // no trailing newline: stdout matches the HTTP body byte for byte
            write_out(out, &body)
        }
        Command::Load { file, config } => {
            let bytes = std::fs::read(&file).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", file.display())))?;
            let summary = match config {
                Some(c) => {
                    let mut dir = Config::load(&c)?.build_directory()?;
                    dir.load_ntriples(&bytes).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", file.display())))?
                }
                None => {
                    let text = std::str::from_utf8(&bytes).map_err(|_| {
                        Failure::new(EXIT_DATA, NTriplesError { line: 0, message: "invalid UTF-8".into() })
                    })?;
                    let triples = ypsp_core::ingest::parse_ntriples(text)
                        .map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", file.display())))?;
                    let entities: std::collections::BTreeSet<_> = triples.iter().map(|t| t.subject().clone()).collect();
                    ypsp_core::directory::LoadSummary { entities: entities.len(), triples: triples.len() }
                }
            };
            write_out(out, format!("{summary}\n").as_bytes())
        }
        Command::Export { out: path, config } => {
            let dir = Config::load(&config.config)?.build_directory()?;
            let bytes = dir.export_ntriples();
            std::fs::write(&path, &bytes).map_err(|e| Failure::new(EXIT_RUNTIME, format!("{}: {e}", path.display())))?;
            let entities: std::collections::BTreeSet<_> = dir.store().iter().map(|t| t.subject().clone()).collect();
            let summary = ypsp_core::directory::LoadSummary { entities: entities.len(), triples: dir.store().len() };
            write_out(out, format!("{summary}\n").as_bytes())
        }
        Command::Federate { config, file, class } => {
            let config = Config::load(&config.config)?;
            let text = read_text(&file)?;
            if text.trim().is_empty() {
                return Err(Failure::new(EXIT_USAGE, "empty query"));
            }
            let client = reqwest::Client::new();
            let fed = runtime()?
                .block_on(fanout(&client, &text, &config.endpoints, class.as_deref()))
                .map_err(|e| Failure::new(EXIT_DATA, e))?;
            let _ = writeln!(err, "{}", fed.report());
            write_out(out, &ypsp_core::query::to_sparql_json(&fed.merged))?;
            write_out(out, b"\n")
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_USAGE;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    match execute(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
