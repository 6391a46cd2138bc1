//! SPARQL 1.1 query results in JSON.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::exec::{Binding, ResultSet};
use crate::store::{BlankNode, Datatype, Literal, Term, TermError, Variable};

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("malformed results document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid term in results: {0}")]
    Term(#[from] TermError),
    #[error("unknown term type {0:?}")]
    UnknownType(String),
    #[error("binding for undeclared variable {0:?}")]
    UndeclaredVar(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    head: Head,
    results: Results,
}

#[derive(Debug, Serialize, Deserialize)]
struct Head {
    vars: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Results {
    bindings: Vec<BTreeMap<String, JsonTerm>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct JsonTerm {
    #[serde(rename = "type")]
    kind: String,
    value: String,
    #[serde(rename = "xml:lang", skip_serializing_if = "Option::is_none", default)]
    lang: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    datatype: Option<String>,
}

impl From<&Term> for JsonTerm {
    fn from(term: &Term) -> Self {
        match term {
            Term::Iri(i) => JsonTerm { kind: "uri".into(), value: i.as_str().into(), lang: None, datatype: None },
            Term::Blank(b) => JsonTerm { kind: "bnode".into(), value: b.label().into(), lang: None, datatype: None },
            Term::Literal(l) => JsonTerm {
                kind: "literal".into(),
                value: l.lexical().into(),
                lang: l.language().map(str::to_string),
                datatype: match l.datatype() {
                    Datatype::String => None,
                    dt => Some(dt.iri().to_string()),
                },
            },
        }
    }
}

impl TryFrom<JsonTerm> for Term {
    type Error = ResultsError;

    fn try_from(j: JsonTerm) -> Result<Self, ResultsError> {
        Ok(match j.kind.as_str() {
            "uri" => Term::iri(&j.value)?,
            "bnode" => Term::Blank(BlankNode::new(j.value)?),
            "literal" | "typed-literal" => Term::Literal(match (j.lang, j.datatype) {
                (Some(lang), _) => Literal::lang_string(j.value, &lang)?,
                (None, Some(dt)) => Literal::typed(&j.value, Datatype::from_iri(&dt)?)?,
                (None, None) => Literal::string(j.value)?,
            }),
            other => return Err(ResultsError::UnknownType(other.to_string())),
        })
    }
}

/// Serializes a binding as a JSON object of SPARQL result terms.
pub fn binding_to_json(row: &Binding) -> serde_json::Value {
    let map: BTreeMap<&str, JsonTerm> = row.iter().map(|(v, t)| (v.name(), JsonTerm::from(t))).collect();
    serde_json::to_value(map).expect("terms serialize")
}

pub fn to_sparql_json(rs: &ResultSet) -> Vec<u8> {
    let doc = Document {
        head: Head { vars: rs.vars.iter().map(|v| v.name().to_string()).collect() },
        results: Results {
            bindings: rs
                .rows
                .iter()
                .map(|row| row.iter().map(|(v, t)| (v.name().to_string(), JsonTerm::from(t))).collect())
                .collect(),
        },
    };
    serde_json::to_vec(&doc).expect("results serialize")
}

/// Parses a results document. Row order is kept as received.
pub fn from_sparql_json(bytes: &[u8]) -> Result<ResultSet, ResultsError> {
    let doc: Document = serde_json::from_slice(bytes)?;
    let vars = doc.head.vars.into_iter().map(Variable::new).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(doc.results.bindings.len());
    for b in doc.results.bindings {
        let mut row = Binding::new();
        for (name, jt) in b {
            let var = Variable::new(name.clone())?;
            if !vars.contains(&var) {
                return Err(ResultsError::UndeclaredVar(name));
            }
            row.insert(var, Term::try_from(jt)?);
        }
        rows.push(row);
    }
    Ok(ResultSet { vars, rows })
}
