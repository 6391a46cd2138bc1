//! Basic-graph-pattern evaluation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::ast::*;
use crate::geo::GeoIndex;
use crate::store::{PatternTerm, Term, TripleStore, Variable};

/// One result row. Unbound variables are absent.
pub type Binding = BTreeMap<Variable, Term>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResultSet {
    pub vars: Vec<Variable>,
    pub rows: Vec<Binding>,
}

impl ResultSet {
    pub fn new(vars: Vec<Variable>) -> Self {
        ResultSet { vars, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Deduplicates rows and sorts them by the projected variables in order.
    pub fn canonicalize(&mut self) {
        let vars = self.vars.clone();
        let key = |row: &Binding| -> Vec<Option<Term>> { vars.iter().map(|v| row.get(v).cloned()).collect() };
        let mut seen = BTreeSet::new();
        let mut keyed: Vec<(Vec<Option<Term>>, Binding)> = Vec::new();
        for row in self.rows.drain(..) {
            let k = key(&row);
            if seen.insert(k.clone()) {
                keyed.push((k, row));
            }
        }
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        self.rows = keyed.into_iter().map(|(_, r)| r).collect();
    }
}

/// Order in which rows are reported: lexicographic over `vars`, unbound first.
pub fn row_key(vars: &[Variable], row: &Binding) -> Vec<Option<Term>> {
    vars.iter().map(|v| row.get(v).cloned()).collect()
}

/// Query blank nodes behave as variables that are never projected.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) enum Slot {
    Var(String),
    Blank(String),
}

pub(crate) type Row = HashMap<Slot, Term>;

pub(crate) fn slot_of(pt: &PatternTerm) -> Option<Slot> {
    match pt {
        PatternTerm::Var(v) => Some(Slot::Var(v.name().to_string())),
        PatternTerm::Term(Term::Blank(b)) => Some(Slot::Blank(b.label().to_string())),
        _ => None,
    }
}

/// Value of a pattern position under `row`, or `None` when it is free.
fn resolve(pt: &PatternTerm, row: &Row) -> Option<Term> {
    match slot_of(pt) {
        Some(slot) => row.get(&slot).cloned(),
        None => pt.as_term().cloned(),
    }
}

/// Binds free positions of `pt` to `value`; false on conflict.
fn bind(pt: &PatternTerm, value: &Term, row: &mut Row) -> bool {
    match slot_of(pt) {
        Some(slot) => match row.get(&slot) {
            Some(existing) => existing == value,
            None => {
                row.insert(slot, value.clone());
                true
            }
        },
        None => match pt {
            PatternTerm::Any => true,
            _ => pt.as_term() == Some(value),
        },
    }
}

/// Whether every comparison holds for `row`. Unbound variables and values of
/// an incomparable kind eliminate the row.
pub(crate) fn filters_hold(filters: &[Filter], lookup: impl Fn(&Variable) -> Option<Term>) -> bool {
    filters.iter().all(|f| {
        f.comparisons.iter().all(|c| match lookup(&c.var) {
            Some(Term::Literal(lit)) => lit.value_cmp(&c.value).is_some_and(|ord| c.op.holds(ord)),
            _ => false,
        })
    })
}

/// Evaluates `query` over `store`, using `geo` for `nearby` patterns.
///
/// A query with no patterns has no rows.
pub fn execute(query: &Query, store: &TripleStore, geo: &GeoIndex) -> ResultSet {
    let mut result = ResultSet::new(query.select.clone());
    if query.patterns.is_empty() {
        return result;
    }
    let ordered = query
        .patterns
        .iter()
        .filter(|p| matches!(p, PatternItem::Nearby(_)))
        .chain(query.patterns.iter().filter(|p| matches!(p, PatternItem::Triple(_))));

    let mut rows: Vec<Row> = vec![Row::new()];
    for item in ordered {
        let mut next = Vec::new();
        match item {
            PatternItem::Nearby(n) => {
                let slot = Slot::Var(n.entity.name().to_string());
                let hits = geo.nearby(n.center, n.radius_km);
                for row in &rows {
                    match row.get(&slot) {
                        Some(bound) => {
                            if hits.iter().any(|(iri, _)| Term::Iri(iri.clone()) == *bound) {
                                next.push(row.clone());
                            }
                        }
                        None => {
                            for (iri, _) in &hits {
                                let mut r = row.clone();
                                r.insert(slot.clone(), Term::Iri(iri.clone()));
                                next.push(r);
                            }
                        }
                    }
                }
            }
            PatternItem::Triple(tp) => {
                for row in &rows {
                    let s = resolve(&tp.subject, row);
                    let p = resolve(&tp.predicate, row);
                    let o = resolve(&tp.object, row);
                    for t in store.match_bound(s.as_ref(), p.as_ref(), o.as_ref()) {
                        let mut r = row.clone();
                        if bind(&tp.subject, t.subject(), &mut r)
                            && bind(&tp.predicate, t.predicate(), &mut r)
                            && bind(&tp.object, t.object(), &mut r)
                        {
                            next.push(r);
                        }
                    }
                }
            }
        }
        rows = next;
        if rows.is_empty() {
            break;
        }
    }

    for row in rows {
        let lookup = |v: &Variable| row.get(&Slot::Var(v.name().to_string())).cloned();
        if !filters_hold(&query.filters, lookup) {
            continue;
        }
        let projected: Binding = query
            .select
            .iter()
            .filter_map(|v| row.get(&Slot::Var(v.name().to_string())).map(|t| (v.clone(), t.clone())))
            .collect();
        result.rows.push(projected);
    }
    result.canonicalize();
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;
    use crate::store::{Literal, Triple};

    fn t(s: &str, p: &str, o: Term) -> Triple {
        let ns = "http://localhost:8080/";
        Triple::new(Term::iri(&format!("{ns}{s}")).unwrap(), Term::iri(&format!("{ns}{p}")).unwrap(), o).unwrap()
    }

    fn lit(s: &str) -> Term {
        Term::Literal(Literal::string(s).unwrap())
    }

    fn store() -> TripleStore {
        let mut st = TripleStore::new();
        for (name, meal, cost) in [("Darshini", "Lunch", 100), ("Kamat", "Dinner", 50), ("Upahar", "Breakfast", 25)] {
            st.insert(t(name, "name", lit(name)));
            st.insert(t(name, "foodtype", lit("Veg")));
            st.insert(t(name, "mealtype", lit(meal)));
            st.insert(t(name, "cost", Term::Literal(Literal::integer(cost))));
        }
        st
    }

    const P: &str = "PREFIX rest: <http://localhost:8080/>\n";

    fn run(body: &str) -> ResultSet {
        let q = parse_query(&format!("{P}{body}")).unwrap();
        execute(&q, &store(), &GeoIndex::default())
    }

    fn names(rs: &ResultSet) -> Vec<String> {
        rs.rows
            .iter()
            .map(|r| r.values().next().unwrap().as_literal().unwrap().lexical().to_string())
            .collect()
    }

    #[test]
    fn lunch_is_darshini() {
        let rs = run(r#"SELECT ?name WHERE { ?r rest:foodtype "Veg" ; rest:mealtype "Lunch" ; rest:name ?name }"#);
        assert_eq!(names(&rs), ["Darshini"]);
    }

    #[test]
    fn empty_store() {
        let q = parse_query(&format!("{P}SELECT ?n WHERE {{ ?r rest:name ?n }}")).unwrap();
        assert!(execute(&q, &TripleStore::new(), &GeoIndex::default()).is_empty());
    }

    #[test]
    fn filters_and_sorting() {
        let rs = run("SELECT ?name WHERE { ?r rest:name ?name ; rest:cost ?c FILTER(?c <= 60) }");
        assert_eq!(names(&rs), ["Kamat", "Upahar"]);
        let rs = run("SELECT ?name WHERE { ?r rest:name ?name ; rest:cost ?c FILTER(?c >= 50 && ?c <= 100) }");
        assert_eq!(names(&rs), ["Darshini", "Kamat"]);
    }

    #[test]
    fn type_mismatch_eliminates_row() {
        let rs = run(r#"SELECT ?name WHERE { ?r rest:name ?name FILTER(?name < 5) }"#);
        assert!(rs.is_empty());
    }

    #[test]
    fn blank_nodes_join_but_are_not_projected() {
        let rs = run(r#"SELECT ?name WHERE { _:x rest:name ?name ; rest:mealtype "Dinner" }"#);
        assert_eq!(names(&rs), ["Kamat"]);
    }

    #[test]
    fn projection_dedups() {
        let rs = run(r#"SELECT ?f WHERE { ?r rest:foodtype ?f }"#);
        assert_eq!(rs.len(), 1);
    }
}
