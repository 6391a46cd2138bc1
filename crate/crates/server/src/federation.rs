//! Fan a SPARQL query out to remote `/sparql` endpoints and merge the answers.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::task::JoinSet;
use ypsp_core::query::{from_sparql_json, parse_query, row_key, ResultSet};
use ypsp_core::store::Variable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub name: String,
    pub url: String,
    pub timeout_ms: u64,
    /// Business classes served; empty means the endpoint takes every query.
    #[serde(default)]
    pub classes: Vec<String>,
}

impl EndpointConfig {
    pub fn new(name: &str, url: &str, timeout_ms: u64) -> Self {
        EndpointConfig { name: name.into(), url: url.into(), timeout_ms, classes: Vec::new() }
    }

    fn serves(&self, class_hint: Option<&str>) -> bool {
        match class_hint {
            Some(c) if !self.classes.is_empty() => self.classes.iter().any(|x| x == c),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EndpointStatus {
    Ok { rows: usize },
    Timeout,
    HttpError { code: u16 },
    ParseError { message: String },
    Unreachable { message: String },
}

impl EndpointStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, EndpointStatus::Ok { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedResult {
    pub merged: ResultSet,
    pub per_endpoint: BTreeMap<String, EndpointStatus>,
    pub partial: bool,
}

impl FederatedResult {
    /// Endpoint report: `{"partial":bool,"endpoints":{name:{"status":..}}}`.
    pub fn report(&self) -> serde_json::Value {
        serde_json::json!({ "partial": self.partial, "endpoints": self.per_endpoint })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FederationError {
    #[error("no endpoint serves this query")]
    NoEndpoints,
    #[error("duplicate endpoint name {0:?}")]
    DuplicateName(String),
    #[error("endpoint {0:?}: timeout_ms must be positive")]
    BadTimeout(String),
    #[error("endpoint {name:?}: bad url {url:?}")]
    BadUrl { name: String, url: String },
    #[error("incompatible result heads: {0:?} vs {1:?}")]
    IncompatibleHeads(Vec<String>, Vec<String>),
    #[error("nothing to merge")]
    Empty,
    #[error("query does not parse: {0}")]
    Query(String),
}

pub fn validate_endpoints(endpoints: &[EndpointConfig]) -> Result<(), FederationError> {
    let mut names = BTreeSet::new();
    for e in endpoints {
        if !names.insert(e.name.as_str()) {
            return Err(FederationError::DuplicateName(e.name.clone()));
        }
        if e.timeout_ms == 0 {
            return Err(FederationError::BadTimeout(e.name.clone()));
        }
        if reqwest::Url::parse(&e.url).is_err() {
            return Err(FederationError::BadUrl { name: e.name.clone(), url: e.url.clone() });
        }
    }
    Ok(())
}

fn names(vars: &[Variable]) -> Vec<String> {
    vars.iter().map(|v| v.name().to_string()).collect()
}

/// Union of result sets sharing one head, deduplicated and sorted.
pub fn merge_results(sets: &[ResultSet]) -> Result<ResultSet, FederationError> {
    let first = sets.first().ok_or(FederationError::Empty)?;
    let mut out = ResultSet::new(first.vars.clone());
    for rs in sets {
        if rs.vars != first.vars {
            return Err(FederationError::IncompatibleHeads(names(&first.vars), names(&rs.vars)));
        }
        out.rows.extend(rs.rows.iter().cloned());
    }
    out.canonicalize();
    Ok(out)
}

async fn ask(client: reqwest::Client, endpoint: EndpointConfig, query: String, vars: Vec<Variable>) -> (EndpointStatus, Option<ResultSet>) {
    let url = match reqwest::Url::parse_with_params(&endpoint.url, &[("query", query.as_str())]) {
        Ok(u) => u,
        Err(e) => return (EndpointStatus::Unreachable { message: e.to_string() }, None),
    };
    let limit = Duration::from_millis(endpoint.timeout_ms);
    let call = async {
        let resp = client.get(url).header("accept", "application/sparql-results+json").send().await?;
        let status = resp.status();
        let body = resp.bytes().await?;
        Ok::<_, reqwest::Error>((status, body))
    };
    match tokio::time::timeout(limit, call).await {
        Err(_) => (EndpointStatus::Timeout, None),
        Ok(Err(e)) if e.is_timeout() => (EndpointStatus::Timeout, None),
        Ok(Err(e)) => (EndpointStatus::Unreachable { message: e.to_string() }, None),
        Ok(Ok((status, _))) if !status.is_success() => (EndpointStatus::HttpError { code: status.as_u16() }, None),
        Ok(Ok((_, body))) => match from_sparql_json(&body) {
            Err(e) => (EndpointStatus::ParseError { message: e.to_string() }, None),
            Ok(rs) if rs.vars != vars => (
                EndpointStatus::ParseError {
                    message: FederationError::IncompatibleHeads(names(&vars), names(&rs.vars)).to_string(),
                },
                None,
            ),
            Ok(rs) => (EndpointStatus::Ok { rows: rs.len() }, Some(rs)),
        },
    }
}

/// Sends `query` to every endpoint serving `class_hint` at once and merges
/// whatever came back in time.
pub async fn fanout(
    client: &reqwest::Client,
    query: &str,
    endpoints: &[EndpointConfig],
    class_hint: Option<&str>,
) -> Result<FederatedResult, FederationError> {
    let parsed = parse_query(query).map_err(|e| FederationError::Query(e.to_string()))?;
    let chosen: Vec<&EndpointConfig> = endpoints.iter().filter(|e| e.serves(class_hint)).collect();
    if chosen.is_empty() {
        return Err(FederationError::NoEndpoints);
    }
    let mut tasks = JoinSet::new();
    for e in chosen {
        let (client, e, q, vars) = (client.clone(), e.clone(), query.to_string(), parsed.select.clone());
        tasks.spawn(async move {
            let name = e.name.clone();
            (name, ask(client, e, q, vars).await)
        });
    }
    let mut per_endpoint = BTreeMap::new();
    let mut sets = vec![ResultSet::new(parsed.select.clone())];
    while let Some(done) = tasks.join_next().await {
        let (name, (status, rs)) = done.expect("fanout task panicked");
        per_endpoint.insert(name, status);
        sets.extend(rs);
    }
    let merged = merge_results(&sets)?;
    let partial = per_endpoint.values().any(|s| !s.is_ok());
    Ok(FederatedResult { merged, per_endpoint, partial })
}

/// Rows of `extra` not already in `base` (by full projected binding).
pub fn new_rows<'a>(base: &ResultSet, extra: &'a ResultSet) -> Vec<&'a ypsp_core::query::Binding> {
    let seen: BTreeSet<_> = base.rows.iter().map(|r| row_key(&base.vars, r)).collect();
    extra.rows.iter().filter(|r| !seen.contains(&row_key(&extra.vars, r))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ypsp_core::query::Binding;
    use ypsp_core::store::{Literal, Term};

    fn rs(vars: &[&str], rows: &[&[&str]]) -> ResultSet {
        let vars: Vec<Variable> = vars.iter().map(|v| Variable::new(*v).unwrap()).collect();
        let mut out = ResultSet::new(vars.clone());
        for r in rows {
            let b: Binding = vars
                .iter()
                .zip(r.iter())
                .map(|(v, s)| (v.clone(), Term::Literal(Literal::string(*s).unwrap())))
                .collect();
            out.rows.push(b);
        }
        out.canonicalize();
        out
    }

    #[test]
    fn merge_identity_and_idempotence() {
        let r = rs(&["n"], &[&["b"], &["a"]]);
        let empty = rs(&["n"], &[]);
        assert_eq!(merge_results(&[r.clone(), empty]).unwrap(), r);
        assert_eq!(merge_results(&[r.clone(), r.clone()]).unwrap(), r);
    }

    #[test]
    fn merge_rejects_mismatched_heads() {
        let a = rs(&["n"], &[]);
        let b = rs(&["m"], &[]);
        assert!(matches!(merge_results(&[a, b]), Err(FederationError::IncompatibleHeads(..))));
        assert_eq!(merge_results(&[]), Err(FederationError::Empty));
    }

    #[test]
    fn routing_by_class() {
        let mut a = EndpointConfig::new("a", "http://127.0.0.1:1/sparql", 10);
        a.classes = vec!["School".into()];
        let b = EndpointConfig::new("b", "http://127.0.0.1:2/sparql", 10);
        assert!(!a.serves(Some("Restaurant")));
        assert!(a.serves(Some("School")));
        assert!(a.serves(None));
        assert!(b.serves(Some("Restaurant")));
    }

    #[test]
    fn status_json_shape() {
        let v = serde_json::to_value(EndpointStatus::Ok { rows: 2 }).unwrap();
        assert_eq!(v, serde_json::json!({"status": "ok", "rows": 2}));
        let v = serde_json::to_value(EndpointStatus::HttpError { code: 500 }).unwrap();
        assert_eq!(v, serde_json::json!({"status": "http_error", "code": 500}));
    }
}
