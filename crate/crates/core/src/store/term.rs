use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const RDF_FIRST: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#first";
pub const RDF_REST: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#rest";
pub const RDF_NIL: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#nil";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("invalid IRI {0:?}: {1}")]
    InvalidIri(String, &'static str),
    #[error("invalid blank node label {0:?}")]
    InvalidBlank(String),
    #[error("invalid {datatype} literal {lexical:?}")]
    InvalidLexical { lexical: String, datatype: &'static str },
    #[error("unsupported datatype <{0}>")]
    UnsupportedDatatype(String),
    #[error("invalid language tag {0:?}")]
    InvalidLanguage(String),
    #[error("literal contains a line break")]
    LineBreak,
    #[error("non-finite decimal value")]
    NonFinite,
    #[error("triple subject must be an IRI or blank node")]
    LiteralSubject,
    #[error("triple predicate must be an IRI")]
    NonIriPredicate,
    #[error("invalid variable name {0:?}")]
    InvalidVariable(String),
}

/// Absolute IRI. Non-empty, carries a scheme separator, no whitespace or
/// N-Triples delimiters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Iri(String);

impl Iri {
    pub fn new(value: impl Into<String>) -> Result<Self, TermError> {
        let value = value.into();
        if value.is_empty() {
            return Err(TermError::InvalidIri(value, "empty"));
        }
        match value.find(':') {
            Some(0) | None => return Err(TermError::InvalidIri(value, "missing scheme")),
            Some(_) => {}
        }
        if value
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '\\' | '^' | '`'))
        {
            return Err(TermError::InvalidIri(value, "illegal character"));
        }
        Ok(Iri(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl serde::Serialize for Iri {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Datatype {
    String,
    Integer,
    Decimal,
}

impl Datatype {
    pub fn iri(self) -> &'static str {
        match self {
            Datatype::String => XSD_STRING,
            Datatype::Integer => XSD_INTEGER,
            Datatype::Decimal => XSD_DECIMAL,
        }
    }

    pub fn from_iri(iri: &str) -> Result<Self, TermError> {
        match iri {
            XSD_STRING => Ok(Datatype::String),
            XSD_INTEGER => Ok(Datatype::Integer),
            XSD_DECIMAL => Ok(Datatype::Decimal),
            other => Err(TermError::UnsupportedDatatype(other.to_string())),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Datatype::String => "string",
            Datatype::Integer => "integer",
            Datatype::Decimal => "decimal",
        }
    }
}

/// A literal in canonical form.
///
/// Integer lexical forms are re-rendered from the parsed `i64`, decimals from
/// the parsed `f64` (always with a fractional part), and language tags are
/// lowercased, so structural equality coincides with value equality inside a
/// datatype.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    lexical: String,
    datatype: Datatype,
    language: Option<String>,
}

impl Literal {
    pub fn string(value: impl Into<String>) -> Result<Self, TermError> {
        let lexical = value.into();
        check_line_breaks(&lexical)?;
        Ok(Literal { lexical, datatype: Datatype::String, language: None })
    }

    pub fn lang_string(value: impl Into<String>, language: &str) -> Result<Self, TermError> {
        let lexical = value.into();
        check_line_breaks(&lexical)?;
        let valid = !language.is_empty()
            && language.split('-').all(|part| {
                !part.is_empty() && part.len() <= 8 && part.chars().all(|c| c.is_ascii_alphanumeric())
            })
            && language.chars().next().is_some_and(|c| c.is_ascii_alphabetic());
        if !valid {
            return Err(TermError::InvalidLanguage(language.to_string()));
        }
        Ok(Literal { lexical, datatype: Datatype::String, language: Some(language.to_ascii_lowercase()) })
    }

    pub fn integer(value: i64) -> Self {
        Literal { lexical: value.to_string(), datatype: Datatype::Integer, language: None }
    }

    pub fn decimal(value: f64) -> Result<Self, TermError> {
        if !value.is_finite() {
            return Err(TermError::NonFinite);
        }
        Ok(Literal { lexical: canonical_decimal(value), datatype: Datatype::Decimal, language: None })
    }

    /// Builds a literal from a lexical form and datatype, canonicalising numbers.
    pub fn typed(lexical: &str, datatype: Datatype) -> Result<Self, TermError> {
        match datatype {
            Datatype::String => Literal::string(lexical),
            Datatype::Integer => parse_integer(lexical)
                .map(Literal::integer)
                .ok_or_else(|| invalid(lexical, datatype)),
            Datatype::Decimal => match parse_decimal(lexical) {
                Some(v) => Literal::decimal(v),
                None => Err(invalid(lexical, datatype)),
            },
        }
    }

    pub fn lexical(&self) -> &str {
        &self.lexical
    }

    pub fn datatype(&self) -> Datatype {
        self.datatype
    }

    pub fn language(&self) -> Option<&str> {
        self.language.as_deref()
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.datatype, Datatype::Integer | Datatype::Decimal)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self.datatype {
            Datatype::Integer | Datatype::Decimal => self.lexical.parse().ok(),
            Datatype::String => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self.datatype {
            Datatype::Integer => self.lexical.parse().ok(),
            _ => None,
        }
    }

    /// Compares two literals by value: numbers numerically, plain strings
    /// bytewise. Returns `None` across kinds (a type error in a filter).
    pub fn value_cmp(&self, other: &Literal) -> Option<Ordering> {
        match (self.is_numeric(), other.is_numeric()) {
            (true, true) => match (self.as_i64(), other.as_i64()) {
                (Some(a), Some(b)) => Some(a.cmp(&b)),
                _ => self.as_f64()?.partial_cmp(&other.as_f64()?),
            },
            (false, false) => {
                if self.language != other.language {
                    return None;
                }
                Some(self.lexical.as_bytes().cmp(other.lexical.as_bytes()))
            }
            _ => None,
        }
    }
}

fn invalid(lexical: &str, datatype: Datatype) -> TermError {
    TermError::InvalidLexical { lexical: lexical.to_string(), datatype: datatype.name() }
}

fn check_line_breaks(s: &str) -> Result<(), TermError> {
    if s.contains(['\n', '\r']) {
        Err(TermError::LineBreak)
    } else {
        Ok(())
    }
}

fn parse_integer(s: &str) -> Option<i64> {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.strip_prefix('+').unwrap_or(s).parse().ok()
}

fn parse_decimal(s: &str) -> Option<f64> {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    let ok = !(int_part.is_empty() && frac_part.is_empty())
        && int_part.bytes().all(|b| b.is_ascii_digit())
        && frac_part.bytes().all(|b| b.is_ascii_digit());
    if !ok {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub(crate) fn canonical_decimal(value: f64) -> String {
    let value = if value == 0.0 { 0.0 } else { value };
    let mut s = value.to_string();
    if !s.contains('.') {
        s.push_str(".0");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlankNode(String);

impl BlankNode {
    pub fn new(label: impl Into<String>) -> Result<Self, TermError> {
        let label = label.into();
        let valid = !label.is_empty()
            && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            && !label.starts_with('-');
        if valid {
            Ok(BlankNode(label))
        } else {
            Err(TermError::InvalidBlank(label))
        }
    }

    pub fn label(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Iri(Iri),
    Literal(Literal),
    Blank(BlankNode),
}

impl Term {
    pub fn iri(value: &str) -> Result<Self, TermError> {
        Iri::new(value).map(Term::Iri)
    }

    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Term::Iri(iri) => Some(iri),
            _ => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Term::Literal(lit) => Some(lit),
            _ => None,
        }
    }

    fn kind_rank(&self) -> u8 {
        match self {
            Term::Blank(_) => 0,
            Term::Iri(_) => 1,
            Term::Literal(_) => 2,
        }
    }
}

impl From<Iri> for Term {
    fn from(iri: Iri) -> Self {
        Term::Iri(iri)
    }
}

impl From<Literal> for Term {
    fn from(lit: Literal) -> Self {
        Term::Literal(lit)
    }
}

impl From<BlankNode> for Term {
    fn from(b: BlankNode) -> Self {
        Term::Blank(b)
    }
}

// Blank < IRI < literal. Numeric literals sort before strings and compare by
// value; ties between an integer and an equal decimal fall back to datatype.
impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Term::Iri(a), Term::Iri(b)) => a.cmp(b),
            (Term::Blank(a), Term::Blank(b)) => a.cmp(b),
            (Term::Literal(a), Term::Literal(b)) => a.cmp(b),
            _ => self.kind_rank().cmp(&other.kind_rank()),
        }
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Literal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.is_numeric(), other.is_numeric()) {
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (true, true) => {
                let a = self.as_f64().unwrap_or(0.0);
                let b = other.as_f64().unwrap_or(0.0);
                a.total_cmp(&b)
                    .then_with(|| self.datatype.cmp(&other.datatype))
                    .then_with(|| match (self.as_i64(), other.as_i64()) {
                        (Some(x), Some(y)) => x.cmp(&y),
                        _ => self.lexical.cmp(&other.lexical),
                    })
            }
            (false, false) => self
                .lexical
                .as_bytes()
                .cmp(other.lexical.as_bytes())
                .then_with(|| self.language.cmp(&other.language)),
        }
    }
}

impl PartialOrd for Literal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn escape_string(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// N-Triples rendering.
impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::with_capacity(self.lexical.len() + 2);
        escape_string(&self.lexical, &mut out);
        f.write_str(&out)?;
        if let Some(lang) = &self.language {
            write!(f, "@{lang}")
        } else if self.datatype != Datatype::String {
            write!(f, "^^<{}>", self.datatype.iri())
        } else {
            Ok(())
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(iri) => iri.fmt(f),
            Term::Literal(lit) => lit.fmt(f),
            Term::Blank(b) => write!(f, "_:{}", b.0),
        }
    }
}

/// A subject-predicate-object statement. Construction enforces that the
/// subject is not a literal and the predicate is an IRI.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    subject: Term,
    predicate: Term,
    object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Self, TermError> {
        if matches!(subject, Term::Literal(_)) {
            return Err(TermError::LiteralSubject);
        }
        if !matches!(predicate, Term::Iri(_)) {
            return Err(TermError::NonIriPredicate);
        }
        Ok(Triple { subject, predicate, object })
    }

    pub fn subject(&self) -> &Term {
        &self.subject
    }

    pub fn predicate(&self) -> &Term {
        &self.predicate
    }

    pub fn object(&self) -> &Term {
        &self.object
    }

    pub fn into_parts(self) -> (Term, Term, Term) {
        (self.subject, self.predicate, self.object)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Variable(String);

impl Variable {
    pub fn new(name: impl Into<String>) -> Result<Self, TermError> {
        let name = name.into();
        let mut chars = name.chars();
        let valid = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
        if valid {
            Ok(Variable(name))
        } else {
            Err(TermError::InvalidVariable(name))
        }
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatternTerm {
    Term(Term),
    Var(Variable),
    Any,
}

impl PatternTerm {
    pub fn as_term(&self) -> Option<&Term> {
        match self {
            PatternTerm::Term(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&Variable> {
        match self {
            PatternTerm::Var(v) => Some(v),
            _ => None,
        }
    }
}

impl From<Term> for PatternTerm {
    fn from(t: Term) -> Self {
        PatternTerm::Term(t)
    }
}

impl From<Variable> for PatternTerm {
    fn from(v: Variable) -> Self {
        PatternTerm::Var(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn new(
        subject: impl Into<PatternTerm>,
        predicate: impl Into<PatternTerm>,
        object: impl Into<PatternTerm>,
    ) -> Self {
        TriplePattern { subject: subject.into(), predicate: predicate.into(), object: object.into() }
    }

    /// True when `triple` unifies with this pattern, including consistency of
    /// a variable repeated across positions.
    pub fn matches(&self, triple: &Triple) -> bool {
        let slots = [
            (&self.subject, &triple.subject),
            (&self.predicate, &triple.predicate),
            (&self.object, &triple.object),
        ];
        for (i, (pat, term)) in slots.iter().enumerate() {
            match pat {
                PatternTerm::Term(t) if t != *term => return false,
                PatternTerm::Var(v) => {
                    for (other_pat, other_term) in &slots[i + 1..] {
                        if other_pat.as_var() == Some(v) && other_term != term {
                            return false;
                        }
                    }
                }
                _ => {}
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iri_requires_scheme() {
        assert!(Iri::new("http://localhost:8080/name").is_ok());
        assert!(Iri::new("java:org.geospatialweb.arqext.nearby").is_ok());
        assert!(Iri::new("").is_err());
        assert!(Iri::new("relative/path").is_err());
        assert!(Iri::new(":nothing").is_err());
        assert!(Iri::new("http://a b").is_err());
    }

    #[test]
    fn numeric_literals_are_canonical() {
        assert_eq!(Literal::typed("+007", Datatype::Integer).unwrap(), Literal::integer(7));
        assert_eq!(Literal::typed("5", Datatype::Decimal).unwrap().lexical(), "5.0");
        assert_eq!(Literal::typed("12.9381470", Datatype::Decimal).unwrap().lexical(), "12.938147");
        assert_eq!(Literal::typed("-0.0", Datatype::Decimal).unwrap().lexical(), "0.0");
        assert!(Literal::typed("9223372036854775808", Datatype::Integer).is_err());
        assert!(Literal::typed("cheap", Datatype::Integer).is_err());
        assert!(Literal::typed("1e5", Datatype::Decimal).is_err());
        assert!(Literal::typed(".", Datatype::Decimal).is_err());
        assert!(Literal::typed(".5", Datatype::Decimal).is_ok());
    }

    #[test]
    fn language_tags_fold_case() {
        let a = Literal::lang_string("Darshini", "EN").unwrap();
        let b = Literal::lang_string("Darshini", "en").unwrap();
        assert_eq!(a, b);
        assert!(Literal::lang_string("x", "").is_err());
        assert!(Literal::lang_string("x", "1en").is_err());
    }

    #[test]
    fn literal_subject_rejected() {
        let lit = Term::Literal(Literal::string("Veg").unwrap());
        let p = Term::iri("http://localhost:8080/foodtype").unwrap();
        assert_eq!(Triple::new(lit.clone(), p.clone(), lit.clone()), Err(TermError::LiteralSubject));
        assert_eq!(Triple::new(p.clone(), lit.clone(), lit), Err(TermError::NonIriPredicate));
    }

    #[test]
    fn ordering_numeric_by_value() {
        let nine = Term::Literal(Literal::integer(9));
        let ten = Term::Literal(Literal::integer(10));
        let nine_half = Term::Literal(Literal::decimal(9.5).unwrap());
        let s = Term::Literal(Literal::string("1").unwrap());
        let mut v = vec![s.clone(), ten.clone(), nine_half.clone(), nine.clone()];
        v.sort();
        assert_eq!(v, vec![nine, nine_half, ten, s]);
    }

    #[test]
    fn value_cmp_rejects_mixed_kinds() {
        let n = Literal::integer(5);
        let s = Literal::string("5").unwrap();
        assert_eq!(n.value_cmp(&s), None);
        assert_eq!(n.value_cmp(&Literal::decimal(5.0).unwrap()), Some(Ordering::Equal));
    }

    #[test]
    fn repeated_variable_must_agree() {
        let x = Variable::new("x").unwrap();
        let pat = TriplePattern::new(x.clone(), PatternTerm::Any, x);
        let a = Term::iri("http://e/a").unwrap();
        let b = Term::iri("http://e/b").unwrap();
        let p = Term::iri("http://e/p").unwrap();
        assert!(pat.matches(&Triple::new(a.clone(), p.clone(), a.clone()).unwrap()));
        assert!(!pat.matches(&Triple::new(a, p, b).unwrap()));
    }

    #[test]
    fn variable_names() {
        assert!(Variable::new("_r1").is_ok());
        assert!(Variable::new("1r").is_err());
        assert!(Variable::new("a-b").is_err());
    }
}
