//! The directory service as one value: store, schema, geo index, gazetteer,
//! penalty table and registry, with the operations every front end shares.
//! Response bodies are produced here so that HTTP, CLI and Python return
//! identical bytes.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, GeoIndex, Gazetteer, LatLon};
use crate::ingest::{self, IngestError, NTriplesError, RegistrationReceipt, Registry};
use crate::query::{binding_to_json, execute, parse_query, to_sparql_json, ParseError, Query, ResultSet};
use crate::relax::{relax_search, Budget, PenaltyTable, RelaxError, RelaxOptions};
use crate::schema::{BusinessRecord, ClassDef, FormSpec, Range, Schema, SchemaError};
use crate::store::{canonical_decimal, escape_string, Iri, Term, TripleStore};

const GEO_PREFIX: &str = "http://www.w3.org/2003/01/geo/wgs84_pos#";
const EXT_PREFIX: &str = "java:org.geospatialweb.arqext.";

/// Form-level search request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredQuery {
    pub class: String,
    #[serde(default)]
    pub filters: BTreeMap<String, FilterSpec>,
    #[serde(default)]
    pub near: Option<Near>,
    #[serde(default = "yes")]
    pub relax: bool,
    #[serde(default)]
    pub select: Option<Vec<String>>,
    /// Also ask configured remote endpoints (unrelaxed query only).
    #[serde(default)]
    pub federate: bool,
}

fn yes() -> bool {
    true
}

impl StructuredQuery {
    pub fn new(class: impl Into<String>) -> Self {
        StructuredQuery {
            class: class.into(),
            filters: BTreeMap::new(),
            near: None,
            relax: true,
            select: None,
            federate: false,
        }
    }

    pub fn eq(mut self, property: &str, value: impl Into<serde_json::Value>) -> Self {
        self.filters.insert(property.into(), FilterSpec { eq: Some(value.into()), min: None, max: None });
        self
    }

    pub fn range(mut self, property: &str, min: Option<f64>, max: Option<f64>) -> Self {
        let num = |v: f64| serde_json::Number::from_f64(v).expect("finite");
        self.filters.insert(property.into(), FilterSpec { eq: None, min: min.map(num), max: max.map(num) });
        self
    }

    pub fn near_point(mut self, lat: f64, lon: f64, radius_km: f64) -> Self {
        self.near = Some(Near { lat: Some(lat), lon: Some(lon), locality: None, radius_km });
        self
    }

    pub fn near_locality(mut self, locality: &str, radius_km: f64) -> Self {
        self.near = Some(Near { lat: None, lon: None, locality: Some(locality.into()), radius_km });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eq: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<serde_json::Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<serde_json::Number>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Near {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locality: Option<String>,
    #[serde(rename = "radiusKm")]
    pub radius_km: f64,
}

/// One problem with a structured query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryViolation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum DirectoryError {
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("invalid query: {}", .0.iter().map(|v| format!("{}: {}", v.field, v.message)).collect::<Vec<_>>().join("; "))]
    InvalidQuery(Vec<QueryViolation>),
    #[error(transparent)]
    Locality(GeoError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("empty query")]
    EmptyQuery,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Data(#[from] NTriplesError),
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

fn violation(field: &str, message: impl Into<String>) -> QueryViolation {
    QueryViolation { field: field.to_string(), message: message.into() }
}

fn class_prefix(class: &str) -> String {
    let p: String = class.chars().take(4).collect::<String>().to_lowercase();
    if p == "geo" || p == "ext" {
        format!("{p}ns")
    } else {
        p
    }
}

fn string_literal(value: &str) -> String {
    let mut out = String::new();
    escape_string(value, &mut out);
    out
}

fn number_literal(value: f64, integer: bool) -> String {
    if integer && value.fract() == 0.0 && value.abs() < 9.0e15 {
        format!("{}", value as i64)
    } else {
        canonical_decimal(value)
    }
}

/// Instantiates the query template for `sq`.
///
/// Patterns come in a fixed order: the `nearby` pattern, the class type
/// pattern (omitted when an equality filter is on a property no other class
/// declares), equality patterns by property name, then variable patterns
/// for projected and range-filtered properties by property name.
pub fn structured_to_sparql(
    sq: &StructuredQuery,
    schema: &Schema,
    gazetteer: &Gazetteer,
) -> Result<String, DirectoryError> {
    let class = schema.class(&sq.class).ok_or_else(|| DirectoryError::UnknownClass(sq.class.clone()))?;
    let mut problems = Vec::new();

    let prop = |name: &str, problems: &mut Vec<QueryViolation>, field: &str| -> Option<&crate::schema::PropertyDef> {
        match class.property(name) {
            None => {
                problems.push(violation(field, format!("{} has no property {name:?}", class.name)));
                None
            }
            Some(p) if p.range == Range::Latlon => {
                problems.push(violation(field, "coordinate properties are queried with near"));
                None
            }
            Some(p) => Some(p),
        }
    };

    let select: Vec<String> = match &sq.select {
        Some(list) if list.is_empty() => {
            problems.push(violation("select", "must name at least one property"));
            Vec::new()
        }
        Some(list) => {
            let mut seen = BTreeSet::new();
            for p in list {
                if !seen.insert(p) {
                    problems.push(violation("select", format!("{p:?} listed twice")));
                }
            }
            list.clone()
        }
        None => default_select(class, sq.near.is_some()),
    };
    for p in &select {
        prop(p, &mut problems, &format!("select.{p}"));
    }

    let mut eq_patterns: Vec<(String, String)> = Vec::new();
    let mut range_filters: Vec<(String, String)> = Vec::new();
    let mut var_props: BTreeSet<String> = select.iter().cloned().collect();
    for (name, spec) in &sq.filters {
        let field = format!("filters.{name}");
        let Some(p) = prop(name, &mut problems, &field) else { continue };
        let numeric = p.range.is_numeric();
        let integer = p.range == Range::Integer;
        if spec.eq.is_some() && (spec.min.is_some() || spec.max.is_some()) {
            problems.push(violation(&field, "eq cannot be combined with min or max"));
            continue;
        }
        if spec.eq.is_none() && spec.min.is_none() && spec.max.is_none() {
            problems.push(violation(&field, "needs eq, min or max"));
            continue;
        }
        if let Some(eq) = &spec.eq {
            match (eq, numeric) {
                (serde_json::Value::String(s), false) => {
                    if s.contains(['\n', '\r']) {
                        problems.push(violation(&field, "value may not contain line breaks"));
                    } else {
                        eq_patterns.push((name.clone(), string_literal(s)));
                    }
                }
                (serde_json::Value::Number(n), false) => eq_patterns.push((name.clone(), string_literal(&n.to_string()))),
                (serde_json::Value::Number(n), true) => {
                    let v = n.as_f64().unwrap_or(f64::NAN);
                    let lit = number_literal(v, integer);
                    range_filters.push((name.clone(), format!("?{name} >= {lit} && ?{name} <= {lit}")));
                    var_props.insert(name.clone());
                }
                (serde_json::Value::String(s), true) => match s.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => {
                        let lit = number_literal(v, integer);
                        range_filters.push((name.clone(), format!("?{name} >= {lit} && ?{name} <= {lit}")));
                        var_props.insert(name.clone());
                    }
                    _ => problems.push(violation(&field, format!("{s:?} is not a number"))),
                },
                _ => problems.push(violation(&field, "eq must be a string or number")),
            }
            continue;
        }
        if !numeric {
            problems.push(violation(&field, "min/max need a numeric property"));
            continue;
        }
        let mut parts = Vec::new();
        if let Some(min) = &spec.min {
            parts.push(format!("?{name} >= {}", number_literal(min.as_f64().unwrap_or(f64::NAN), integer)));
        }
        if let Some(max) = &spec.max {
            parts.push(format!("?{name} <= {}", number_literal(max.as_f64().unwrap_or(f64::NAN), integer)));
        }
        range_filters.push((name.clone(), parts.join(" && ")));
        var_props.insert(name.clone());
    }

    let mut nearby = None;
    if let Some(near) = &sq.near {
        if !(near.radius_km.is_finite() && near.radius_km > 0.0) {
            problems.push(violation("near.radiusKm", "must be a positive number"));
        }
        let center = match (near.lat, near.lon, &near.locality) {
            (Some(lat), Some(lon), None) => match LatLon::new(lat, lon) {
                Ok(c) => Some(c),
                Err(e) => {
                    problems.push(violation("near", e.to_string()));
                    None
                }
            },
            (None, None, Some(name)) => match gazetteer.resolve(name) {
                Ok(c) => Some(c),
                Err(e) => {
                    if problems.is_empty() {
                        return Err(DirectoryError::Locality(e));
                    }
                    problems.push(violation("near.locality", e.to_string()));
                    None
                }
            },
            _ => {
                problems.push(violation("near", "give either lat and lon, or locality"));
                None
            }
        };
        if class.property(crate::schema::LAT).is_none() && class.latlon_property().is_none() {
            problems.push(violation("near", format!("{} has no coordinates", class.name)));
        }
        nearby = center.map(|c| (c, near.radius_km));
    }

    if !problems.is_empty() {
        return Err(DirectoryError::InvalidQuery(problems));
    }

    let prefix = class_prefix(&class.name);
    let mut subject = class.name.to_lowercase();
    if class.property(&subject).is_some() {
        subject.push_str("_entity");
    }
    let type_needed = !eq_patterns.iter().any(|(p, _)| schema.classes_declaring(p).len() == 1);

    let mut text = String::new();
    let _ = writeln!(text, "PREFIX geo: <{GEO_PREFIX}>");
    let _ = writeln!(text, "PREFIX {prefix}: <{}>", schema.namespace);
    let _ = writeln!(text, "PREFIX ext: <{EXT_PREFIX}>");
    text.push('\n');
    text.push_str("SELECT");
    for p in &select {
        let _ = write!(text, " ?{p}");
    }
    text.push_str("\nWHERE\n{\n");
    if let Some((c, r)) = nearby {
        let _ = writeln!(
            text,
            "  ?{subject} ext:nearby ( {} {} {} ) .",
            canonical_decimal(c.lat()),
            canonical_decimal(c.lon()),
            canonical_decimal(r)
        );
    }
    let mut lines: Vec<String> = Vec::new();
    if type_needed {
        lines.push(format!("a {prefix}:{}", class.name));
    }
    eq_patterns.sort();
    for (p, lit) in &eq_patterns {
        lines.push(format!("{prefix}:{p} {lit}"));
    }
    for p in &var_props {
        lines.push(format!("{prefix}:{p} ?{p}"));
    }
    for (i, l) in lines.iter().enumerate() {
        if i == 0 {
            let _ = write!(text, "  ?{subject} {l}");
        } else {
            let _ = write!(text, " ;\n    {l}");
        }
    }
    if !lines.is_empty() {
        text.push_str(" .\n");
    }
    for (_, f) in &range_filters {
        let _ = writeln!(text, "  FILTER({f})");
    }
    text.push_str("}\n");
    Ok(text)
}

fn default_select(class: &ClassDef, near: bool) -> Vec<String> {
    let mut out = vec![class.display.clone()];
    if near && class.display != "address" && class.property("address").is_some() {
        out.push("address".to_string());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LoadSummary {
    pub entities: usize,
    pub triples: usize,
}

impl std::fmt::Display for LoadSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} entities, {} triples", self.entities, self.triples)
    }
}

/// Outcome of a structured search before serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub query: Query,
    pub rows: Vec<SearchRow>,
    pub exhausted: bool,
    /// Remote endpoint report, present only for federated searches.
    pub federation: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchRow {
    pub penalty: f64,
    pub relaxations: Vec<serde_json::Value>,
    pub binding: crate::query::Binding,
}

impl SearchOutcome {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.body()).expect("json")
    }

    /// Serialized with keys in documented order.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.body()).expect("json")
    }

    fn body(&self) -> SearchBody<'_> {
        SearchBody {
            results: self
                .rows
                .iter()
                .map(|r| SearchHit {
                    penalty: r.penalty,
                    relaxations: &r.relaxations,
                    bindings: binding_to_json(&r.binding),
                })
                .collect(),
            exhausted: self.exhausted,
            federation: self.federation.as_ref(),
        }
    }
}

#[derive(Serialize)]
struct SearchBody<'a> {
    results: Vec<SearchHit<'a>>,
    exhausted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    federation: Option<&'a serde_json::Value>,
}

#[derive(Serialize)]
struct SearchHit<'a> {
    penalty: f64,
    relaxations: &'a [serde_json::Value],
    bindings: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Directory {
    schema: Schema,
    store: TripleStore,
    geo: GeoIndex,
    geo_stale: bool,
    gazetteer: Gazetteer,
    penalties: PenaltyTable,
    budget: Budget,
    all_levels: bool,
    registry: Registry,
}

impl Directory {
    pub fn new(schema: Schema, gazetteer: Gazetteer, penalties: PenaltyTable) -> Self {
        Directory {
            schema,
            store: TripleStore::new(),
            geo: GeoIndex::default(),
            geo_stale: false,
            gazetteer,
            penalties,
            budget: Budget::default(),
            all_levels: false,
            registry: Registry::new(),
        }
    }

    pub fn with_budget(mut self, budget: Budget, all_levels: bool) -> Self {
        self.budget = budget;
        self.all_levels = all_levels;
        self
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn store(&self) -> &TripleStore {
        &self.store
    }

    pub fn gazetteer(&self) -> &Gazetteer {
        &self.gazetteer
    }

    pub fn penalties(&self) -> &PenaltyTable {
        &self.penalties
    }

    pub fn geo_is_stale(&self) -> bool {
        self.geo_stale
    }

    /// Rebuilds the spatial index if a write invalidated it.
    pub fn refresh_geo(&mut self) {
        if self.geo_stale {
            self.geo = GeoIndex::build(&self.store, &self.schema);
            self.geo_stale = false;
        }
    }

    /// Current index; built on the fly when stale so reads stay correct.
    pub fn geo(&self) -> Cow<'_, GeoIndex> {
        if self.geo_stale {
            Cow::Owned(GeoIndex::build(&self.store, &self.schema))
        } else {
            Cow::Borrowed(&self.geo)
        }
    }

    /// Loads N-Triples, all or nothing.
    pub fn load_ntriples(&mut self, bytes: &[u8]) -> Result<LoadSummary, DirectoryError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| NTriplesError { line: 0, message: "invalid UTF-8".into() })?;
        let triples = ingest::parse_ntriples(text)?;
        let entities: BTreeSet<Term> = triples.iter().map(|t| t.subject().clone()).collect();
        let summary = LoadSummary { entities: entities.len(), triples: triples.len() };
        self.store.extend(triples);
        self.geo_stale = true;
        Ok(summary)
    }

    pub fn export_ntriples(&self) -> Vec<u8> {
        ingest::export_ntriples(&self.store)
    }

    pub fn parse(&self, text: &str) -> Result<Query, DirectoryError> {
        if text.trim().is_empty() {
            return Err(DirectoryError::EmptyQuery);
        }
        Ok(parse_query(text)?)
    }

    pub fn execute(&self, query: &Query) -> ResultSet {
        execute(query, &self.store, &self.geo())
    }

    /// SPARQL endpoint body.
    pub fn sparql(&self, text: &str) -> Result<Vec<u8>, DirectoryError> {
        let query = self.parse(text)?;
        Ok(to_sparql_json(&self.execute(&query)))
    }

    pub fn structured_to_sparql(&self, sq: &StructuredQuery) -> Result<String, DirectoryError> {
        structured_to_sparql(sq, &self.schema, &self.gazetteer)
    }

    pub fn search(&self, sq: &StructuredQuery) -> Result<SearchOutcome, DirectoryError> {
        let text = self.structured_to_sparql(sq)?;
        let query = parse_query(&text)?;
        let geo = self.geo();
        if !sq.relax {
            let rs = execute(&query, &self.store, &geo);
            let rows = rs
                .rows
                .into_iter()
                .map(|binding| SearchRow { penalty: 0.0, relaxations: Vec::new(), binding })
                .collect();
            return Ok(SearchOutcome { query, rows, exhausted: false, federation: None });
        }
        let options = RelaxOptions { budget: self.budget, all_levels: self.all_levels };
        let outcome = relax_search(&query, &self.store, &geo, &self.penalties, options)?;
        let rows = outcome
            .results
            .into_iter()
            .map(|r| SearchRow {
                penalty: r.penalty,
                relaxations: r.applied.iter().map(|a| a.to_json(&self.penalties)).collect(),
                binding: r.binding,
            })
            .collect();
        Ok(SearchOutcome { query, rows, exhausted: outcome.exhausted, federation: None })
    }

    /// `/search` body.
    pub fn search_body(&self, sq: &StructuredQuery) -> Result<Vec<u8>, DirectoryError> {
        Ok(self.search(sq)?.to_bytes())
    }

    pub fn register(&mut self, record: &BusinessRecord) -> Result<RegistrationReceipt, DirectoryError> {
        let receipt = self.registry.register(record, &self.schema, &mut self.store)?;
        self.geo_stale = true;
        Ok(receipt)
    }

    pub fn update(&mut self, iri: &Iri, record: &BusinessRecord) -> Result<RegistrationReceipt, DirectoryError> {
        let receipt = self.registry.update(iri, record, &self.schema, &mut self.store)?;
        self.geo_stale = true;
        Ok(receipt)
    }

    pub fn form_spec(&self, class: &str) -> Result<FormSpec, DirectoryError> {
        Ok(self.schema.form_spec(class)?)
    }

    pub fn record(&self, iri: &Iri) -> Option<BusinessRecord> {
        self.schema.record_from_store(&self.store, iri)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir() -> Directory {
        let schema = Schema::load(include_bytes!("../../../fixtures/schema.json")).unwrap();
        let gaz = Gazetteer::parse(include_str!("../../../fixtures/gazetteer.tsv")).unwrap();
        let mut d = Directory::new(schema, gaz, PenaltyTable::default());
        d.load_ntriples(include_bytes!("../../../fixtures/restaurants.nt")).unwrap();
        d.refresh_geo();
        d
    }

    #[test]
    fn veg_lunch_template() {
        let d = dir();
        let sq = StructuredQuery::new("Restaurant")
            .eq("foodtype", "Veg")
            .eq("mealtype", "Lunch")
            .near_point(12.938147, 77.609825, 5.0);
        let text = d.structured_to_sparql(&sq).unwrap();
        let veg_lunch = parse_query(include_str!("../../../fixtures/veg_lunch.rq")).unwrap();
        assert_eq!(parse_query(&text).unwrap(), veg_lunch, "{text}");
    }

    #[test]
    fn bare_class_selects_name_with_type_pattern() {
        let text = dir().structured_to_sparql(&StructuredQuery::new("Restaurant")).unwrap();
        let q = parse_query(&text).unwrap();
        assert_eq!(q.select.len(), 1);
        assert_eq!(q.select[0].name(), "name");
        assert!(text.contains("?restaurant a rest:Restaurant"), "{text}");
        assert_eq!(q.patterns.len(), 2);
    }

    #[test]
    fn cost_range_filter() {
        let sq = StructuredQuery::new("Restaurant").range("cost", Some(50.0), Some(100.0));
        let text = dir().structured_to_sparql(&sq).unwrap();
        assert!(text.contains("FILTER(?cost >= 50 && ?cost <= 100)"), "{text}");
    }

    #[test]
    fn invalid_requests() {
        let d = dir();
        let e = d.structured_to_sparql(&StructuredQuery::new("Restaurant").eq("colour", "red")).unwrap_err();
        assert!(matches!(e, DirectoryError::InvalidQuery(v) if v[0].field == "filters.colour"));
        assert!(matches!(d.structured_to_sparql(&StructuredQuery::new("Garage")), Err(DirectoryError::UnknownClass(_))));
        let e = d.structured_to_sparql(&StructuredQuery::new("Restaurant").near_locality("Adugodee", 1.0)).unwrap_err();
        assert!(matches!(e, DirectoryError::Locality(GeoError::UnknownLocality { ref suggestions, .. }) if suggestions[0] == "Adugodi"));
        let e = d.structured_to_sparql(&StructuredQuery::new("Restaurant").range("foodtype", Some(1.0), None));
        assert!(e.is_err());
    }

    #[test]
    fn search_relaxes_cost() {
        let d = dir();
        let out = d.search(&StructuredQuery::new("Restaurant").range("cost", None, Some(20.0))).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].penalty, 3.0);
        assert_eq!(out.rows[0].relaxations.len(), 1);
        let body = String::from_utf8(out.to_bytes()).unwrap();
        assert!(body.starts_with(r#"{"results":[{"penalty":3.0,"#), "{body}");
        assert!(body.contains("Upahar"));
    }

    #[test]
    fn adugodi_radius_expansion() {
        let d = dir();
        let out = d.search(&StructuredQuery::new("Restaurant").near_locality("adugodi", 1.0)).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].penalty, 2.0);
        let name = &out.rows[0].binding[&crate::store::Variable::new("name").unwrap()];
        assert_eq!(name.as_literal().unwrap().lexical(), "Darshini");
    }

    #[test]
    fn register_is_visible_to_search() {
        let mut d = dir();
        let rec = BusinessRecord::new("Restaurant")
            .with("name", "Vidyarthi Bhavan")
            .with("foodtype", "Veg")
            .with("mealtype", "Breakfast")
            .with("address", "Gandhi Bazaar")
            .with("lat", "12.9450")
            .with("long", "77.5710");
        d.register(&rec).unwrap();
        let out = d.search(&StructuredQuery::new("Restaurant").near_point(12.945, 77.571, 0.5)).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].penalty, 0.0);
    }
}
