//! Ontology declarations: classes with datatype properties, record validation,
//! triple generation and form descriptors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{Datatype, Iri, Literal, Term, TermError, Triple, TripleStore, RDF_TYPE};

/// Predicate local names a `latlon` property expands into.
pub const LAT: &str = "lat";
pub const LONG: &str = "long";

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed schema document: {0}")]
    Document(#[from] serde_json::Error),
    #[error("invalid namespace {0:?}")]
    Namespace(String),
    #[error("duplicate class {0:?}")]
    DuplicateClass(String),
    #[error("class {class:?}: duplicate property {property:?}")]
    DuplicateProperty { class: String, property: String },
    #[error("class {class:?}: display property {display:?} is not declared")]
    MissingDisplay { class: String, display: String },
    #[error("class {class:?}: invalid identifier {name:?}")]
    Identifier { class: String, name: String },
    #[error("class {class:?}: {message}")]
    LatLon { class: String, message: String },
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("record has {} violation(s)", .0.len())]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Term(#[from] TermError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Range {
    String,
    Integer,
    Decimal,
    Latlon,
}

impl Range {
    pub fn is_numeric(self) -> bool {
        matches!(self, Range::Integer | Range::Decimal)
    }

    fn datatype(self) -> Datatype {
        match self {
            Range::String => Datatype::String,
            Range::Integer => Datatype::Integer,
            Range::Decimal | Range::Latlon => Datatype::Decimal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyDef {
    pub name: String,
    pub range: Range,
    #[serde(default)]
    pub functional: bool,
    #[serde(default)]
    pub mandatory: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDef {
    pub name: String,
    pub display: String,
    pub properties: Vec<PropertyDef>,
}

impl ClassDef {
    pub fn property(&self, name: &str) -> Option<&PropertyDef> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn latlon_property(&self) -> Option<&PropertyDef> {
        self.properties.iter().find(|p| p.range == Range::Latlon)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub namespace: String,
    pub classes: Vec<ClassDef>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Schema {
    /// Parses and checks a JSON schema document.
    pub fn load(document: &[u8]) -> Result<Schema, SchemaError> {
        let schema: Schema = serde_json::from_slice(document)?;
        schema.check()?;
        Ok(schema)
    }

    fn check(&self) -> Result<(), SchemaError> {
        let ns_ok = Iri::new(self.namespace.clone()).is_ok()
            && (self.namespace.ends_with('/') || self.namespace.ends_with('#'));
        if !ns_ok {
            return Err(SchemaError::Namespace(self.namespace.clone()));
        }
        let mut seen = BTreeSet::new();
        for class in &self.classes {
            if !is_identifier(&class.name) {
                return Err(SchemaError::Identifier { class: class.name.clone(), name: class.name.clone() });
            }
            if !seen.insert(class.name.as_str()) {
                return Err(SchemaError::DuplicateClass(class.name.clone()));
            }
            let mut props = BTreeSet::new();
            for prop in &class.properties {
                if !is_identifier(&prop.name) {
                    return Err(SchemaError::Identifier { class: class.name.clone(), name: prop.name.clone() });
                }
                if !props.insert(prop.name.as_str()) {
                    return Err(SchemaError::DuplicateProperty {
                        class: class.name.clone(),
                        property: prop.name.clone(),
                    });
                }
            }
            if class.property(&class.display).is_none() {
                return Err(SchemaError::MissingDisplay { class: class.name.clone(), display: class.display.clone() });
            }
            let latlon: Vec<_> = class.properties.iter().filter(|p| p.range == Range::Latlon).collect();
            if latlon.len() > 1 {
                return Err(SchemaError::LatLon { class: class.name.clone(), message: "more than one latlon property".into() });
            }
            if !latlon.is_empty() && (props.contains(LAT) || props.contains(LONG)) {
                return Err(SchemaError::LatLon {
                    class: class.name.clone(),
                    message: "latlon property conflicts with a declared lat/long property".into(),
                });
            }
        }
        Ok(())
    }

    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.iter().find(|c| c.name == name)
    }

    fn class_or_err(&self, name: &str) -> Result<&ClassDef, SchemaError> {
        self.class(name).ok_or_else(|| SchemaError::UnknownClass(name.to_string()))
    }

    pub fn iri(&self, local: &str) -> Iri {
        Iri::new(format!("{}{}", self.namespace, local)).expect("namespace checked at load")
    }

    pub fn property_iri(&self, property: &str) -> Iri {
        self.iri(property)
    }

    pub fn class_iri(&self, class: &str) -> Iri {
        self.iri(class)
    }

    /// Classes declaring a property with this name.
    pub fn classes_declaring(&self, property: &str) -> Vec<&ClassDef> {
        self.classes.iter().filter(|c| c.property(property).is_some()).collect()
    }

    /// Checks a record against its class. An undeclared class is an error,
    /// everything else is reported as a violation.
    pub fn validate_record(&self, record: &BusinessRecord) -> Result<Vec<Violation>, SchemaError> {
        let class = self.class_or_err(&record.class)?;
        let mut out = Vec::new();
        for (key, values) in &record.values {
            let Some(prop) = class.property(key) else {
                out.push(Violation::new(key, ViolationKind::UnknownProperty));
                continue;
            };
            if prop.functional && values.len() > 1 {
                out.push(Violation::new(key, ViolationKind::MultipleValues { count: values.len() }));
            }
            for value in values {
                if parse_value(prop.range, value).is_err() {
                    out.push(Violation::new(key, ViolationKind::BadValue { value: value.clone(), range: prop.range }));
                }
            }
        }
        for prop in &class.properties {
            let present = record.values.get(&prop.name).is_some_and(|v| !v.is_empty());
            if prop.mandatory && !present {
                out.push(Violation::new(&prop.name, ViolationKind::MissingMandatory));
            }
        }
        Ok(out)
    }

    /// Triples describing `record` with `subject` as the entity.
    pub fn record_to_triples(&self, record: &BusinessRecord, subject: &Iri) -> Result<Vec<Triple>, SchemaError> {
        let violations = self.validate_record(record)?;
        if !violations.is_empty() {
            return Err(SchemaError::Invalid(violations));
        }
        let class = self.class_or_err(&record.class)?;
        let s = Term::Iri(subject.clone());
        let mut out = vec![Triple::new(
            s.clone(),
            Term::iri(RDF_TYPE)?,
            Term::Iri(self.class_iri(&class.name)),
        )?];
        for prop in &class.properties {
            for value in record.values.get(&prop.name).into_iter().flatten() {
                match parse_value(prop.range, value)? {
                    Parsed::Single(lit) => out.push(Triple::new(
                        s.clone(),
                        Term::Iri(self.property_iri(&prop.name)),
                        Term::Literal(lit),
                    )?),
                    Parsed::Pair(lat, lon) => {
                        out.push(Triple::new(s.clone(), Term::Iri(self.iri(LAT)), Term::Literal(lat))?);
                        out.push(Triple::new(s.clone(), Term::Iri(self.iri(LONG)), Term::Literal(lon))?);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Reads an entity back from the store as a record of the class named
    /// by its `rdf:type`. Returns `None` when the subject has no declared type.
    pub fn record_from_store(&self, store: &TripleStore, subject: &Iri) -> Option<BusinessRecord> {
        let s = Term::Iri(subject.clone());
        let rdf_type = Term::iri(RDF_TYPE).ok()?;
        let class = store.objects(&s, &rdf_type).into_iter().find_map(|t| {
            let iri = t.as_iri()?.as_str().strip_prefix(&self.namespace)?.to_string();
            self.class(&iri)
        })?;
        let mut values: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for prop in &class.properties {
            let lexicals: Vec<String> = if prop.range == Range::Latlon {
                let lats = store.objects(&s, &Term::Iri(self.iri(LAT)));
                let longs = store.objects(&s, &Term::Iri(self.iri(LONG)));
                match (lats.as_slice(), longs.as_slice()) {
                    ([Term::Literal(a)], [Term::Literal(b)]) => vec![format!("{},{}", a.lexical(), b.lexical())],
                    _ => Vec::new(),
                }
            } else {
                store
                    .objects(&s, &Term::Iri(self.property_iri(&prop.name)))
                    .into_iter()
                    .filter_map(|t| t.as_literal().map(|l| l.lexical().to_string()))
                    .collect()
            };
            if !lexicals.is_empty() {
                values.insert(prop.name.clone(), lexicals);
            }
        }
        Some(BusinessRecord { class: class.name.clone(), values })
    }

    /// Field descriptors for rendering registration and query forms.
    pub fn form_spec(&self, class: &str) -> Result<FormSpec, SchemaError> {
        let class = self.class_or_err(class)?;
        let fields = class
            .properties
            .iter()
            .map(|p| FieldSpec {
                name: p.name.clone(),
                label: label(&p.name),
                range: p.range,
                mandatory: p.mandatory,
                multivalued: !p.functional,
                operators: operators(p.range),
            })
            .collect();
        Ok(FormSpec { class: class.name.clone(), display: class.display.clone(), fields })
    }
}

fn label(name: &str) -> String {
    let mut chars = name.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn operators(range: Range) -> Vec<Operator> {
    match range {
        Range::String => vec![Operator::Eq],
        Range::Integer | Range::Decimal => vec![Operator::Eq, Operator::Le, Operator::Ge, Operator::Between],
        Range::Latlon => vec![Operator::Nearby],
    }
}

enum Parsed {
    Single(Literal),
    Pair(Literal, Literal),
}

fn parse_value(range: Range, value: &str) -> Result<Parsed, TermError> {
    if range != Range::Latlon {
        return Literal::typed(value.trim(), range.datatype()).map(Parsed::Single);
    }
    let bad = || TermError::InvalidLexical { lexical: value.to_string(), datatype: "latlon" };
    let (lat, lon) = value.split_once(',').ok_or_else(bad)?;
    let lat = Literal::typed(lat.trim(), Datatype::Decimal).map_err(|_| bad())?;
    let lon = Literal::typed(lon.trim(), Datatype::Decimal).map_err(|_| bad())?;
    let in_range = lat.as_f64().is_some_and(|v| v.abs() <= 90.0) && lon.as_f64().is_some_and(|v| v.abs() <= 180.0);
    if !in_range {
        return Err(bad());
    }
    Ok(Parsed::Pair(lat, lon))
}

/// A business listing as submitted for registration: property name to lexical
/// values. Single values may be given as a bare string in JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusinessRecord {
    pub class: String,
    #[serde(deserialize_with = "one_or_many")]
    pub values: BTreeMap<String, Vec<String>>,
}

impl BusinessRecord {
    pub fn new(class: impl Into<String>) -> Self {
        BusinessRecord { class: class.into(), values: BTreeMap::new() }
    }

    pub fn with(mut self, property: &str, value: impl ToString) -> Self {
        self.values.entry(property.to_string()).or_default().push(value.to_string());
        self
    }

    pub fn first(&self, property: &str) -> Option<&str> {
        self.values.get(property).and_then(|v| v.first()).map(String::as_str)
    }
}

fn one_or_many<'de, D>(de: D) -> Result<BTreeMap<String, Vec<String>>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Value {
        One(String),
        Number(serde_json::Number),
        Many(Vec<String>),
    }
    let raw: BTreeMap<String, Value> = BTreeMap::deserialize(de)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| {
            let values = match v {
                Value::One(s) => vec![s],
                Value::Number(n) => vec![n.to_string()],
                Value::Many(v) => v,
            };
            (k, values)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub property: String,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

impl Violation {
    fn new(property: &str, kind: ViolationKind) -> Self {
        Violation { property: property.to_string(), kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    MissingMandatory,
    MultipleValues { count: usize },
    BadValue { value: String, range: Range },
    UnknownProperty,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            ViolationKind::MissingMandatory => write!(f, "{}: mandatory value missing", self.property),
            ViolationKind::MultipleValues { count } => {
                write!(f, "{}: functional property given {count} values", self.property)
            }
            ViolationKind::BadValue { value, range } => {
                write!(f, "{}: {value:?} is not a valid {range:?}", self.property)
            }
            ViolationKind::UnknownProperty => write!(f, "{}: property not declared", self.property),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "between")]
    Between,
    #[serde(rename = "nearby")]
    Nearby,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub label: String,
    pub range: Range,
    pub mandatory: bool,
    pub multivalued: bool,
    pub operators: Vec<Operator>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormSpec {
    pub class: String,
    pub display: String,
    pub fields: Vec<FieldSpec>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
      "namespace": "http://localhost:8080/",
      "classes": [{
        "name": "Restaurant", "display": "name",
        "properties": [
          {"name": "name", "range": "string", "functional": true, "mandatory": true},
          {"name": "location", "range": "string"},
          {"name": "cost", "range": "integer", "functional": true},
          {"name": "mealtype", "range": "string"},
          {"name": "foodtype", "range": "string", "functional": true},
          {"name": "address", "range": "string", "functional": true},
          {"name": "lat", "range": "decimal", "functional": true},
          {"name": "long", "range": "decimal", "functional": true}
        ]
      }, {
        "name": "Landmark", "display": "title",
        "properties": [
          {"name": "title", "range": "string", "functional": true, "mandatory": true},
          {"name": "position", "range": "latlon", "functional": true}
        ]
      }]
    }"#;

    fn schema() -> Schema {
        Schema::load(DOC.as_bytes()).unwrap()
    }

    #[test]
    fn loads_restaurant_schema() {
        let s = schema();
        assert_eq!(s.class("Restaurant").unwrap().properties.len(), 8);
    }

    #[test]
    fn rejects_duplicate_class() {
        let doc = r#"{"namespace":"http://x/","classes":[
            {"name":"Restaurant","display":"name","properties":[{"name":"name","range":"string"}]},
            {"name":"Restaurant","display":"name","properties":[{"name":"name","range":"string"}]}]}"#;
        assert!(matches!(Schema::load(doc.as_bytes()), Err(SchemaError::DuplicateClass(c)) if c == "Restaurant"));
    }

    #[test]
    fn rejects_duplicate_property_and_bad_range() {
        let dup = r#"{"namespace":"http://x/","classes":[{"name":"A","display":"n","properties":[
            {"name":"n","range":"string"},{"name":"n","range":"integer"}]}]}"#;
        assert!(matches!(Schema::load(dup.as_bytes()), Err(SchemaError::DuplicateProperty { property, .. }) if property == "n"));
        let range = r#"{"namespace":"http://x/","classes":[{"name":"A","display":"n","properties":[
            {"name":"n","range":"colour"}]}]}"#;
        assert!(matches!(Schema::load(range.as_bytes()), Err(SchemaError::Document(_))));
    }

    #[test]
    fn rejects_missing_display_and_unknown_keys() {
        let doc = r#"{"namespace":"http://x/","classes":[{"name":"A","display":"title","properties":[
            {"name":"n","range":"string"}]}]}"#;
        assert!(matches!(Schema::load(doc.as_bytes()), Err(SchemaError::MissingDisplay { .. })));
        let extra = r#"{"namespace":"http://x/","classes":[],"version":2}"#;
        assert!(Schema::load(extra.as_bytes()).is_err());
    }

    #[test]
    fn empty_class_list_is_valid() {
        let s = Schema::load(br#"{"namespace":"http://x/","classes":[]}"#).unwrap();
        assert!(s.classes.is_empty());
    }

    #[test]
    fn upahar_validates() {
        let r = BusinessRecord::new("Restaurant")
            .with("name", "Upahar")
            .with("location", "Vijayanagar")
            .with("cost", 25)
            .with("mealtype", "Breakfast")
            .with("foodtype", "Veg");
        assert_eq!(schema().validate_record(&r).unwrap(), vec![]);
    }

    #[test]
    fn missing_name_and_bad_cost() {
        let r = BusinessRecord::new("Restaurant").with("foodtype", "Veg");
        let v = schema().validate_record(&r).unwrap();
        assert_eq!(v, vec![Violation::new("name", ViolationKind::MissingMandatory)]);

        let r = BusinessRecord::new("Restaurant").with("name", "X").with("cost", "cheap");
        let v = schema().validate_record(&r).unwrap();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0].kind, ViolationKind::BadValue { range: Range::Integer, .. }));
    }

    #[test]
    fn functional_and_unknown_violations() {
        let r = BusinessRecord::new("Restaurant")
            .with("name", "X")
            .with("foodtype", "Veg")
            .with("foodtype", "NonVeg")
            .with("rating", "5");
        let v = schema().validate_record(&r).unwrap();
        assert_eq!(v.len(), 2);
        assert!(schema().validate_record(&BusinessRecord::new("Garage")).is_err());
    }

    #[test]
    fn darshini_triples() {
        let s = schema();
        let r = BusinessRecord::new("Restaurant")
            .with("name", "Darshini")
            .with("foodtype", "Veg")
            .with("location", "Koramangala")
            .with("location", "Vijayanagar")
            .with("mealtype", "Lunch")
            .with("cost", 100);
        let triples = s.record_to_triples(&r, &s.iri("Darshini")).unwrap();
        // rdf:type plus six values
        assert_eq!(triples.len(), 7);
        let loc = Term::Iri(s.property_iri("location"));
        assert_eq!(triples.iter().filter(|t| t.predicate() == &loc).count(), 2);
    }

    #[test]
    fn name_only_gives_two_triples() {
        let s = schema();
        let r = BusinessRecord::new("Restaurant").with("name", "Solo");
        assert_eq!(s.record_to_triples(&r, &s.iri("Solo")).unwrap().len(), 2);
    }

    #[test]
    fn latlon_expands() {
        let s = schema();
        let r = BusinessRecord::new("Landmark").with("title", "Forum").with("position", "12.938147,77.609825");
        let triples = s.record_to_triples(&r, &s.iri("Forum")).unwrap();
        // type, title, lat, long
        assert_eq!(triples.len(), 4);
        let lat = triples.iter().find(|t| t.predicate() == &Term::Iri(s.iri(LAT))).unwrap();
        assert_eq!(lat.object(), &Term::Literal(Literal::decimal(12.938147).unwrap()));
        assert!(triples.iter().any(|t| t.predicate() == &Term::Iri(s.iri(LONG))));
        let bad = BusinessRecord::new("Landmark").with("title", "X").with("position", "95,10");
        assert_eq!(s.validate_record(&bad).unwrap().len(), 1);
    }

    #[test]
    fn invalid_record_cannot_produce_triples() {
        let s = schema();
        let r = BusinessRecord::new("Restaurant").with("cost", "cheap");
        assert!(matches!(s.record_to_triples(&r, &s.iri("x")), Err(SchemaError::Invalid(v)) if v.len() == 2));
    }

    #[test]
    fn form_spec_operators() {
        let s = schema();
        let form = s.form_spec("Restaurant").unwrap();
        assert_eq!(form.fields.len(), 8);
        let cost = form.fields.iter().find(|f| f.name == "cost").unwrap();
        assert_eq!(cost.operators, vec![Operator::Eq, Operator::Le, Operator::Ge, Operator::Between]);
        assert!(!cost.multivalued);
        assert!(form.fields.iter().find(|f| f.name == "location").unwrap().multivalued);
        let landmark = s.form_spec("Landmark").unwrap();
        assert_eq!(landmark.fields[1].operators, vec![Operator::Nearby]);
        assert!(s.form_spec("Garage").is_err());
    }

    #[test]
    fn all_mandatory_class() {
        let doc = r#"{"namespace":"http://x/","classes":[{"name":"A","display":"n","properties":[
            {"name":"n","range":"string","mandatory":true},{"name":"m","range":"integer","mandatory":true}]}]}"#;
        let s = Schema::load(doc.as_bytes()).unwrap();
        assert!(s.form_spec("A").unwrap().fields.iter().all(|f| f.mandatory));
    }

    #[test]
    fn form_spec_is_deterministic() {
        let a = serde_json::to_vec(&schema().form_spec("Restaurant").unwrap()).unwrap();
        let b = serde_json::to_vec(&schema().form_spec("Restaurant").unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn record_json_accepts_scalars() {
        let r: BusinessRecord = serde_json::from_str(
            r#"{"class":"Restaurant","values":{"name":"Kamat","cost":50,"location":["Gandhinagar"]}}"#,
        )
        .unwrap();
        assert_eq!(r.first("cost"), Some("50"));
        assert_eq!(r.values["location"], vec!["Gandhinagar".to_string()]);
    }
}
