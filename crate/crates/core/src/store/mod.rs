//! Indexed triple storage.
//!
//! Three nested-map indexes (SPO, POS, OSP) give a prefix lookup for every
//! combination of bound positions. Output of [`TripleStore::match_pattern`]
//! is always sorted by subject, predicate, object.

mod term;

pub use term::*;

use std::collections::{BTreeMap, BTreeSet};

type Index = BTreeMap<Term, BTreeMap<Term, BTreeSet<Term>>>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleStore {
    spo: Index,
    pos: Index,
    osp: Index,
    len: usize,
}

fn index_insert(index: &mut Index, a: &Term, b: &Term, c: &Term) -> bool {
    index.entry(a.clone()).or_default().entry(b.clone()).or_default().insert(c.clone())
}

fn index_remove(index: &mut Index, a: &Term, b: &Term, c: &Term) -> bool {
    let Some(level1) = index.get_mut(a) else { return false };
    let Some(level2) = level1.get_mut(b) else { return false };
    let removed = level2.remove(c);
    if level2.is_empty() {
        level1.remove(b);
        if level1.is_empty() {
            index.remove(a);
        }
    }
    removed
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when the triple was already present.
    pub fn insert(&mut self, triple: Triple) -> bool {
        let (s, p, o) = (triple.subject(), triple.predicate(), triple.object());
        if self.contains((s, p, o)) {
            return false;
        }
        index_insert(&mut self.spo, s, p, o);
        index_insert(&mut self.pos, p, o, s);
        index_insert(&mut self.osp, o, s, p);
        self.len += 1;
        true
    }

    pub fn remove(&mut self, triple: &Triple) -> bool {
        let (s, p, o) = (triple.subject(), triple.predicate(), triple.object());
        if !index_remove(&mut self.spo, s, p, o) {
            return false;
        }
        index_remove(&mut self.pos, p, o, s);
        index_remove(&mut self.osp, o, s, p);
        self.len -= 1;
        true
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, (s, p, o): (&Term, &Term, &Term)) -> bool {
        self.spo.get(s).and_then(|m| m.get(p)).is_some_and(|set| set.contains(o))
    }

    pub fn iter(&self) -> impl Iterator<Item = Triple> + '_ {
        self.spo.iter().flat_map(|(s, pm)| {
            pm.iter().flat_map(move |(p, os)| os.iter().map(move |o| make(s, p, o)))
        })
    }

    /// Triples unifying with `pattern`, sorted by (subject, predicate, object).
    pub fn match_pattern(&self, pattern: &TriplePattern) -> Vec<Triple> {
        let bound = |p: &PatternTerm| p.as_term().cloned();
        let mut out = self.match_bound(
            bound(&pattern.subject).as_ref(),
            bound(&pattern.predicate).as_ref(),
            bound(&pattern.object).as_ref(),
        );
        let has_repeat = {
            let vars: Vec<_> = [&pattern.subject, &pattern.predicate, &pattern.object]
                .into_iter()
                .filter_map(PatternTerm::as_var)
                .collect();
            (1..vars.len()).any(|i| vars[..i].contains(&vars[i]))
        };
        if has_repeat {
            out.retain(|t| pattern.matches(t));
        }
        out
    }

    /// Lookup by concrete positions; `None` means unbound.
    pub fn match_bound(&self, s: Option<&Term>, p: Option<&Term>, o: Option<&Term>) -> Vec<Triple> {
        match (s, p, o) {
            (Some(s), Some(p), Some(o)) => {
                if self.contains((s, p, o)) {
                    vec![make(s, p, o)]
                } else {
                    Vec::new()
                }
            }
            (Some(s), Some(p), None) => self
                .spo
                .get(s)
                .and_then(|m| m.get(p))
                .map(|os| os.iter().map(|o| make(s, p, o)).collect())
                .unwrap_or_default(),
            (Some(s), None, None) => self
                .spo
                .get(s)
                .map(|pm| {
                    pm.iter().flat_map(|(p, os)| os.iter().map(move |o| make(s, p, o))).collect()
                })
                .unwrap_or_default(),
            (Some(s), None, Some(o)) => self
                .osp
                .get(o)
                .and_then(|m| m.get(s))
                .map(|ps| ps.iter().map(|p| make(s, p, o)).collect())
                .unwrap_or_default(),
            (None, Some(p), Some(o)) => self
                .pos
                .get(p)
                .and_then(|m| m.get(o))
                .map(|ss| ss.iter().map(|s| make(s, p, o)).collect())
                .unwrap_or_default(),
            (None, None, Some(o)) => self
                .osp
                .get(o)
                .map(|sm| {
                    sm.iter().flat_map(|(s, ps)| ps.iter().map(move |p| make(s, p, o))).collect()
                })
                .unwrap_or_default(),
            (None, Some(p), None) => {
                // POS yields (object, subject) order; restore subject order.
                let mut out: Vec<Triple> = self
                    .pos
                    .get(p)
                    .map(|om| {
                        om.iter().flat_map(|(o, ss)| ss.iter().map(move |s| make(s, p, o))).collect()
                    })
                    .unwrap_or_default();
                out.sort_unstable();
                out
            }
            (None, None, None) => self.iter().collect(),
        }
    }

    /// Every object of `(subject, predicate, ?)`, sorted.
    pub fn objects(&self, subject: &Term, predicate: &Term) -> Vec<Term> {
        self.spo
            .get(subject)
            .and_then(|m| m.get(predicate))
            .map(|os| os.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Every subject of `(?, predicate, object)`, sorted.
    pub fn subjects(&self, predicate: &Term, object: &Term) -> Vec<Term> {
        self.pos
            .get(predicate)
            .and_then(|m| m.get(object))
            .map(|ss| ss.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Distinct subjects carrying `predicate`, sorted.
    pub fn subjects_with(&self, predicate: &Term) -> Vec<Term> {
        let mut out: BTreeSet<&Term> = BTreeSet::new();
        if let Some(om) = self.pos.get(predicate) {
            for ss in om.values() {
                out.extend(ss.iter());
            }
        }
        out.into_iter().cloned().collect()
    }

    pub fn has_subject(&self, subject: &Term) -> bool {
        self.spo.contains_key(subject)
    }

    /// Removes every triple whose subject is `subject`; returns them.
    pub fn remove_subject(&mut self, subject: &Term) -> Vec<Triple> {
        let triples = self.match_bound(Some(subject), None, None);
        for t in &triples {
            self.remove(t);
        }
        triples
    }
}

fn make(s: &Term, p: &Term, o: &Term) -> Triple {
    Triple::new(s.clone(), p.clone(), o.clone()).expect("indexed triples are well-formed")
}

impl Extend<Triple> for TripleStore {
    fn extend<I: IntoIterator<Item = Triple>>(&mut self, iter: I) {
        for t in iter {
            self.insert(t);
        }
    }
}

impl FromIterator<Triple> for TripleStore {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        let mut store = TripleStore::new();
        store.extend(iter);
        store
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NS: &str = "http://localhost:8080/";

    fn iri(local: &str) -> Term {
        Term::iri(&format!("{NS}{local}")).unwrap()
    }

    fn s(v: &str) -> Term {
        Term::Literal(Literal::string(v).unwrap())
    }

    fn t(a: Term, b: Term, c: Term) -> Triple {
        Triple::new(a, b, c).unwrap()
    }

    fn sample_store() -> TripleStore {
        let mut store = TripleStore::new();
        for name in ["Darshini", "Kamat", "Upahar"] {
            store.insert(t(iri(name), iri("foodtype"), s("Veg")));
            store.insert(t(iri(name), iri("name"), s(name)));
        }
        store.insert(t(iri("Darshini"), iri("location"), s("Koramangala")));
        store.insert(t(iri("Darshini"), iri("location"), s("Vijayanagar")));
        store.insert(t(iri("Darshini"), iri("cost"), Term::Literal(Literal::integer(100))));
        store
    }

    #[test]
    fn set_semantics() {
        let mut store = TripleStore::new();
        let triple = t(iri("Darshini"), iri("foodtype"), s("Veg"));
        assert!(store.insert(triple.clone()));
        assert!(!store.insert(triple.clone()));
        assert_eq!(store.len(), 1);
        assert!(store.remove(&triple));
        assert!(!store.remove(&triple));
        assert!(store.is_empty());
    }

    #[test]
    fn insert_grows_size() {
        let mut store = sample_store();
        let before = store.len();
        store.insert(t(iri("Kamat"), iri("cost"), Term::Literal(Literal::integer(50))));
        assert_eq!(store.len(), before + 1);
    }

    #[test]
    fn match_by_predicate_object() {
        let store = sample_store();
        let pat = TriplePattern::new(PatternTerm::Any, iri("foodtype"), s("Veg"));
        let hits = store.match_pattern(&pat);
        assert_eq!(hits.len(), 3);
        let subjects: Vec<_> = hits.iter().map(|t| t.subject().clone()).collect();
        assert_eq!(subjects, vec![iri("Darshini"), iri("Kamat"), iri("Upahar")]);
    }

    #[test]
    fn match_by_subject_predicate() {
        let store = sample_store();
        let pat = TriplePattern::new(iri("Darshini"), iri("location"), Variable::new("l").unwrap());
        let objects: Vec<_> = store.match_pattern(&pat).into_iter().map(|t| t.object().clone()).collect();
        assert_eq!(objects, vec![s("Koramangala"), s("Vijayanagar")]);
    }

    #[test]
    fn predicate_only_is_subject_sorted() {
        let store = sample_store();
        let hits = store.match_bound(None, Some(&iri("name")), None);
        let mut sorted = hits.clone();
        sorted.sort();
        assert_eq!(hits, sorted);
    }

    #[test]
    fn empty_store_matches_nothing() {
        let store = TripleStore::new();
        assert!(store.match_pattern(&TriplePattern::new(PatternTerm::Any, PatternTerm::Any, PatternTerm::Any)).is_empty());
    }

    #[test]
    fn removed_triple_not_matched() {
        let mut store = sample_store();
        let triple = t(iri("Kamat"), iri("foodtype"), s("Veg"));
        store.remove(&triple);
        let pat = TriplePattern::new(PatternTerm::Any, iri("foodtype"), s("Veg"));
        assert!(!store.match_pattern(&pat).contains(&triple));
        assert_eq!(store.match_pattern(&pat).len(), 2);
    }

    #[test]
    fn remove_subject_clears_entity() {
        let mut store = sample_store();
        let removed = store.remove_subject(&iri("Darshini"));
        assert_eq!(removed.len(), 5);
        assert!(!store.has_subject(&iri("Darshini")));
        assert_eq!(store.len(), 4);
    }
}
