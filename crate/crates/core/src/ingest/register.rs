//! Registration and update of business records.

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::{BusinessRecord, Schema, SchemaError, Violation};
use crate::store::{Iri, Literal, Term, TripleStore, RDF_TYPE};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("record has {} violation(s)", .0.len())]
    Invalid(Vec<Violation>),
    #[error("a {class} named {name:?} at this address is already registered as {existing}")]
    Duplicate { class: String, name: String, existing: Iri },
    #[error("no entity {0}")]
    NotFound(Iri),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegistrationReceipt {
    pub iri: Iri,
    #[serde(rename = "createdAt")]
    pub created_at: DateTime<Utc>,
    pub version: u64,
}

/// Lowercase ASCII words joined by `-`.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.is_empty() && !out.ends_with('-') {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        out.push_str("entity");
    }
    out
}

/// Tracks per-entity versions and mints entity IRIs.
#[derive(Debug, Default, Clone)]
pub struct Registry {
    versions: HashMap<Iri, (u64, DateTime<Utc>)>,
    counter: u64,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current version; entities not registered here (loaded from data)
    /// count as version 1.
    pub fn version(&self, iri: &Iri, store: &TripleStore) -> Option<u64> {
        match self.versions.get(iri) {
            Some((v, _)) => Some(*v),
            None if store.has_subject(&Term::Iri(iri.clone())) => Some(1),
            None => None,
        }
    }

    /// `namespace + class + "/" + slug + "-" + 12 hex digits`, unique
    /// against `taken`.
    pub fn mint_iri(
        &mut self,
        schema: &Schema,
        class: &str,
        name: &str,
        at: DateTime<Utc>,
        taken: impl Fn(&Iri) -> bool,
    ) -> Iri {
        loop {
            self.counter += 1;
            let mut hasher = Sha256::new();
            hasher.update(name.as_bytes());
            hasher.update(b"|");
            hasher.update(at.to_rfc3339_opts(chrono::SecondsFormat::Nanos, true).as_bytes());
            hasher.update(b"|");
            hasher.update(self.counter.to_be_bytes());
            let digest = hasher.finalize();
            let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
            let iri = schema.iri(&format!("{class}/{}-{hex}", slug(name)));
            if !taken(&iri) {
                return iri;
            }
        }
    }

    /// Validates, checks for a duplicate (class, name, address) and inserts
    /// the record's triples. Nothing is inserted on error.
    pub fn register(
        &mut self,
        record: &BusinessRecord,
        schema: &Schema,
        store: &mut TripleStore,
    ) -> Result<RegistrationReceipt, IngestError> {
        let violations = schema.validate_record(record)?;
        if !violations.is_empty() {
            return Err(IngestError::Invalid(violations));
        }
        let class = schema.class(&record.class).ok_or_else(|| SchemaError::UnknownClass(record.class.clone()))?;
        let name = record.first(&class.display).unwrap_or_default().to_string();
        if let Some(existing) = find_duplicate(record, schema, store) {
            return Err(IngestError::Duplicate { class: class.name.clone(), name, existing });
        }
        let now = Utc::now();
        let iri = self.mint_iri(schema, &class.name, &name, now, |i| store.has_subject(&Term::Iri(i.clone())));
        let triples = schema.record_to_triples(record, &iri)?;
        store.extend(triples);
        self.versions.insert(iri.clone(), (1, now));
        Ok(RegistrationReceipt { iri, created_at: now, version: 1 })
    }

    /// Replaces every triple of `iri` with those of `record`.
    pub fn update(
        &mut self,
        iri: &Iri,
        record: &BusinessRecord,
        schema: &Schema,
        store: &mut TripleStore,
    ) -> Result<RegistrationReceipt, IngestError> {
        let Some(version) = self.version(iri, store) else {
            return Err(IngestError::NotFound(iri.clone()));
        };
        let violations = schema.validate_record(record)?;
        if !violations.is_empty() {
            return Err(IngestError::Invalid(violations));
        }
        let triples = schema.record_to_triples(record, iri)?;
        store.remove_subject(&Term::Iri(iri.clone()));
        store.extend(triples);
        let created = self.versions.get(iri).map(|(_, c)| *c).unwrap_or_else(Utc::now);
        self.versions.insert(iri.clone(), (version + 1, created));
        Ok(RegistrationReceipt { iri: iri.clone(), created_at: created, version: version + 1 })
    }
}

/// An entity of the same class with the same display name and address.
fn find_duplicate(record: &BusinessRecord, schema: &Schema, store: &TripleStore) -> Option<Iri> {
    let class = schema.class(&record.class)?;
    let name = Literal::string(record.first(&class.display)?).ok()?;
    let address_prop = class.property("address").map(|_| Term::Iri(schema.property_iri("address")));
    let address = record.first("address");
    let rdf_type = Term::iri(RDF_TYPE).ok()?;
    let class_term = Term::Iri(schema.class_iri(&class.name));
    let name_pred = Term::Iri(schema.property_iri(&class.display));
    store.subjects(&name_pred, &Term::Literal(name)).into_iter().find_map(|s| {
        if !store.contains((&s, &rdf_type, &class_term)) {
            return None;
        }
        let existing: Vec<String> = match &address_prop {
            Some(p) => store.objects(&s, p).iter().filter_map(|t| t.as_literal()).map(|l| l.lexical().to_string()).collect(),
            None => Vec::new(),
        };
        let same = match address {
            Some(a) => existing.iter().any(|e| e == a),
            None => existing.is_empty(),
        };
        if same {
            s.as_iri().cloned()
        } else {
            None
        }
    })
}
