//! Unified TOML configuration with `YPSP_` environment overrides.
//!
//! ```toml
//! schema = "schema.json"
//! data = ["restaurants.nt", "more.nt"]   # or a single string
//! gazetteer = "gazetteer.tsv"
//! penalties = "penalties.toml"            # optional
//! port = 8080
//! writer_timeout_ms = 2000
//! endpoints_file = "endpoints.toml"       # optional, holds [[endpoints]]
//!
//! [[endpoints]]
//! name = "north"
//! url = "http://127.0.0.1:8081/sparql"
//! timeout_ms = 1500
//! classes = ["Restaurant"]
//! ```
//!
//! Relative paths resolve against the directory of the config file.
//! Overrides: `YPSP_SCHEMA`, `YPSP_DATA` (comma separated), `YPSP_GAZETTEER`,
//! `YPSP_PENALTIES`, `YPSP_PORT`, `YPSP_BIND`, `YPSP_WRITER_TIMEOUT_MS`,
//! `YPSP_ENDPOINTS_FILE`.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;
use ypsp_core::geo::Gazetteer;
use ypsp_core::relax::PenaltyTable;
use ypsp_core::schema::Schema;
use ypsp_core::{Directory, DirectoryError};

use crate::federation::{validate_endpoints, EndpointConfig, FederationError};

pub const ENV_PREFIX: &str = "YPSP_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: DirectoryError },
    #[error(transparent)]
    Endpoints(#[from] FederationError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(PathBuf),
    Many(Vec<PathBuf>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema: Option<PathBuf>,
    data: Option<OneOrMany>,
    gazetteer: Option<PathBuf>,
    penalties: Option<PathBuf>,
    port: Option<u16>,
    bind: Option<String>,
    writer_timeout_ms: Option<u64>,
    endpoints_file: Option<PathBuf>,
    #[serde(default)]
    endpoints: Vec<EndpointConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EndpointsFile {
    #[serde(default)]
    endpoints: Vec<EndpointConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub schema: PathBuf,
    pub data: Vec<PathBuf>,
    pub gazetteer: PathBuf,
    pub penalties: Option<PathBuf>,
    pub port: u16,
    pub bind: String,
    pub writer_timeout_ms: u64,
    pub endpoints: Vec<EndpointConfig>,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

impl Config {
    /// Reads `path` and applies overrides from the process environment.
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        Self::load_with_env(path, |k| std::env::var(k).ok())
    }

    pub fn load_with_env(path: &Path, env: impl Fn(&str) -> Option<String>) -> Result<Config, ConfigError> {
        let text = read(path)?;
        let raw: RawConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Syntax { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_raw(raw, base, env)
    }

    fn from_raw(raw: RawConfig, base: &Path, env: impl Fn(&str) -> Option<String>) -> Result<Config, ConfigError> {
        let var = |k: &str| env(&format!("{ENV_PREFIX}{k}")).filter(|v| !v.is_empty());
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let from_env = |p: String| PathBuf::from(p);

        let schema = var("SCHEMA").map(from_env).or(raw.schema.map(resolve)).ok_or_else(|| {
            ConfigError::Invalid("schema path is required".into())
        })?;
        let gazetteer = var("GAZETTEER").map(from_env).or(raw.gazetteer.map(resolve)).ok_or_else(|| {
            ConfigError::Invalid("gazetteer path is required".into())
        })?;
        let data = match var("DATA") {
            Some(list) => list.split(',').map(|s| PathBuf::from(s.trim())).collect(),
            None => match raw.data {
                None => Vec::new(),
                Some(OneOrMany::One(p)) => vec![resolve(p)],
                Some(OneOrMany::Many(ps)) => ps.into_iter().map(resolve).collect(),
            },
        };
        let penalties = var("PENALTIES").map(from_env).or(raw.penalties.map(resolve));
        let port = match var("PORT") {
            Some(p) => p.parse().map_err(|_| ConfigError::Invalid(format!("{ENV_PREFIX}PORT: bad port {p:?}")))?,
            None => raw.port.unwrap_or(8080),
        };
        let bind = var("BIND").or(raw.bind).unwrap_or_else(|| "127.0.0.1".into());
        let writer_timeout_ms = match var("WRITER_TIMEOUT_MS") {
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{ENV_PREFIX}WRITER_TIMEOUT_MS: bad value {v:?}")))?,
            None => raw.writer_timeout_ms.unwrap_or(2000),
        };
        if writer_timeout_ms == 0 {
            return Err(ConfigError::Invalid("writer_timeout_ms must be positive".into()));
        }
        let mut endpoints = raw.endpoints;
        if let Some(file) = var("ENDPOINTS_FILE").map(from_env).or(raw.endpoints_file.map(resolve)) {
            let text = read(&file)?;
            let parsed: EndpointsFile =
                toml::from_str(&text).map_err(|e| ConfigError::Syntax { path: file.clone(), message: e.to_string() })?;
            endpoints.extend(parsed.endpoints);
        }
        validate_endpoints(&endpoints)?;
        Ok(Config { schema, data, gazetteer, penalties, port, bind, writer_timeout_ms, endpoints })
    }

    /// Reads schema, gazetteer, penalty table and every data file.
    pub fn build_directory(&self) -> Result<Directory, ConfigError> {
        let schema_bytes =
            std::fs::read(&self.schema).map_err(|source| ConfigError::Io { path: self.schema.clone(), source })?;
        let schema = Schema::load(&schema_bytes).map_err(|e| ConfigError::Data {
            path: self.schema.clone(),
            source: DirectoryError::Schema(e),
        })?;
        let gazetteer = Gazetteer::parse(&read(&self.gazetteer)?).map_err(|e| ConfigError::Data {
            path: self.gazetteer.clone(),
            source: DirectoryError::Locality(e),
        })?;
        let penalties = match &self.penalties {
            Some(p) => PenaltyTable::from_toml(&read(p)?)
                .map_err(|e| ConfigError::Data { path: p.clone(), source: DirectoryError::Relax(e) })?,
            None => PenaltyTable::default(),
        };
        let mut dir = Directory::new(schema, gazetteer, penalties);
        for path in &self.data {
            let bytes = std::fs::read(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
            dir.load_ntriples(&bytes).map_err(|source| ConfigError::Data { path: path.clone(), source })?;
        }
        dir.refresh_geo();
        Ok(dir)
    }
}
