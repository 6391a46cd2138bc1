use std::collections::BTreeMap;
use std::fmt;

use crate::geo::LatLon;
use crate::store::{escape_string, Datatype, Iri, Literal, PatternTerm, Term, TriplePattern, Variable};

/// Predicate IRI of the `nearby` extension.
pub const NEARBY_IRI: &str = "java:org.geospatialweb.arqext.nearby";

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub prefixes: BTreeMap<String, Iri>,
    pub select: Vec<Variable>,
    pub patterns: Vec<PatternItem>,
    pub filters: Vec<Filter>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatternItem {
    Triple(TriplePattern),
    Nearby(NearbyPattern),
}

/// Binds `entity` to every indexed entity within `radius_km` of `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct NearbyPattern {
    pub entity: Variable,
    pub center: LatLon,
    pub radius_km: f64,
}

/// Conjunction of comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub var: Variable,
    pub op: CompareOp,
    pub value: Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CompareOp::Eq => ord == Equal,
            CompareOp::Ne => ord != Equal,
            CompareOp::Lt => ord == Less,
            CompareOp::Le => ord != Greater,
            CompareOp::Gt => ord == Greater,
            CompareOp::Ge => ord != Less,
        }
    }

    pub fn is_upper_bound(self) -> bool {
        matches!(self, CompareOp::Lt | CompareOp::Le)
    }

    pub fn is_lower_bound(self) -> bool {
        matches!(self, CompareOp::Gt | CompareOp::Ge)
    }
}

impl Query {
    /// Variables bound by at least one pattern.
    pub fn pattern_variables(&self) -> Vec<&Variable> {
        let mut out: Vec<&Variable> = Vec::new();
        for item in &self.patterns {
            let vars: Vec<&Variable> = match item {
                PatternItem::Triple(tp) => {
                    [&tp.subject, &tp.predicate, &tp.object].into_iter().filter_map(PatternTerm::as_var).collect()
                }
                PatternItem::Nearby(n) => vec![&n.entity],
            };
            for v in vars {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, lit: &Literal) -> fmt::Result {
    match lit.datatype() {
        Datatype::Integer | Datatype::Decimal => f.write_str(lit.lexical()),
        Datatype::String => {
            let mut s = String::new();
            escape_string(lit.lexical(), &mut s);
            f.write_str(&s)?;
            match lit.language() {
                Some(lang) => write!(f, "@{lang}"),
                None => Ok(()),
            }
        }
    }
}

fn write_pattern_term(f: &mut fmt::Formatter<'_>, pt: &PatternTerm) -> fmt::Result {
    match pt {
        PatternTerm::Var(v) => write!(f, "{v}"),
        PatternTerm::Term(Term::Literal(lit)) => write_literal(f, lit),
        PatternTerm::Term(t) => write!(f, "{t}"),
        PatternTerm::Any => f.write_str("[]"),
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, value: f64) -> fmt::Result {
    f.write_str(&crate::store::canonical_decimal(value))
}

/// Canonical query text. Reparsing it yields an equal [`Query`].
impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (prefix, iri) in &self.prefixes {
            writeln!(f, "PREFIX {prefix}: {iri}")?;
        }
        f.write_str("SELECT")?;
        for v in &self.select {
            write!(f, " {v}")?;
        }
        f.write_str("\nWHERE\n{\n")?;
        for item in &self.patterns {
            f.write_str("  ")?;
            match item {
                PatternItem::Triple(tp) => {
                    write_pattern_term(f, &tp.subject)?;
                    f.write_str(" ")?;
                    write_pattern_term(f, &tp.predicate)?;
                    f.write_str(" ")?;
                    write_pattern_term(f, &tp.object)?;
                }
                PatternItem::Nearby(n) => {
                    write!(f, "{} <{NEARBY_IRI}> ( ", n.entity)?;
                    write_number(f, n.center.lat())?;
                    f.write_str(" ")?;
                    write_number(f, n.center.lon())?;
                    f.write_str(" ")?;
                    write_number(f, n.radius_km)?;
                    f.write_str(" )")?;
                }
            }
            f.write_str(" .\n")?;
        }
        for filter in &self.filters {
            f.write_str("  FILTER(")?;
            for (i, c) in filter.comparisons.iter().enumerate() {
                if i > 0 {
                    f.write_str(" && ")?;
                }
                write!(f, "{} {} ", c.var, c.op.symbol())?;
                write_literal(f, &c.value)?;
            }
            f.write_str(")\n")?;
        }
        f.write_str("}\n")
    }
}
