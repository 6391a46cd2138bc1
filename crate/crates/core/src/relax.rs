//! Penalty-based relaxation of queries that return too little.
//!
//! A query is decomposed into relaxable constraints. A relaxation state
//! assigns each constraint a [`Level`]; its penalty is the sum of the
//! per-constraint penalties. States are explored best-first.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoIndex, LatLon};
use crate::query::{execute, row_key, Binding, CompareOp, Comparison, PatternItem, Query};
use crate::store::{Datatype, Iri, Literal, PatternTerm, Term, TripleStore, Variable, RDF_TYPE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyTable {
    pub drop_penalty: f64,
    pub numeric_step_penalty: f64,
    pub numeric_step_fraction: f64,
    pub radius_step_penalty: f64,
    pub radius_step_factor: f64,
    pub max_widen_steps: u32,
}

impl Default for PenaltyTable {
    fn default() -> Self {
        PenaltyTable {
            drop_penalty: 10.0,
            numeric_step_penalty: 3.0,
            numeric_step_fraction: 0.25,
            radius_step_penalty: 2.0,
            radius_step_factor: 1.5,
            max_widen_steps: 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum RelaxError {
    #[error("penalty table: {0}")]
    Table(String),
    #[error("relaxation target is not a constraint of the query")]
    TargetAbsent,
    #[error("invalid budget: {0}")]
    Budget(String),
}

impl PenaltyTable {
    /// Parses the key-value table (TOML). Missing keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self, RelaxError> {
        let table: PenaltyTable = toml::from_str(text).map_err(|e| RelaxError::Table(e.to_string()))?;
        table.check()?;
        Ok(table)
    }

    pub fn check(&self) -> Result<(), RelaxError> {
        let finite_nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(RelaxError::Table(format!("{name} must be a non-negative number")))
            }
        };
        finite_nonneg("drop_penalty", self.drop_penalty)?;
        finite_nonneg("numeric_step_penalty", self.numeric_step_penalty)?;
        finite_nonneg("numeric_step_fraction", self.numeric_step_fraction)?;
        finite_nonneg("radius_step_penalty", self.radius_step_penalty)?;
        if !(self.radius_step_factor.is_finite() && self.radius_step_factor >= 1.0) {
            return Err(RelaxError::Table("radius_step_factor must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which query element a constraint came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Origin {
    /// Index into `Query::patterns`.
    Pattern(usize),
    /// All range comparisons on one filter variable.
    Filter(Variable),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSide {
    pub value: f64,
    pub strict: bool,
    pub integer: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    CategoricalEq { property: Iri, value: Literal },
    NumericBound { var: Variable, property: Option<Iri>, lower: Option<BoundSide>, upper: Option<BoundSide> },
    Spatial { entity: Variable, center: LatLon, radius_km: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub origin: Origin,
    pub kind: ConstraintKind,
}

/// Per-constraint state of a relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Original,
    Widen(u32),
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Drop,
    WidenNumeric(u32),
    WidenRadius(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation {
    pub target: Constraint,
    pub action: Action,
    pub penalty: f64,
    /// Lower and upper sides a numeric widening moves.
    pub sides: (bool, bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedResult {
    pub binding: Binding,
    pub penalty: f64,
    pub applied: Vec<Relaxation>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub max_penalty: f64,
    pub max_states: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_penalty: 50.0, max_states: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelaxOutcome {
    pub results: Vec<RelaxedResult>,
    /// Set when the search ran out of states or budget without any row.
    pub exhausted: bool,
    pub states_explored: usize,
}

fn local_name(iri: &Iri) -> &str {
    let s = iri.as_str();
    s.rsplit(['/', '#']).next().filter(|l| !l.is_empty()).unwrap_or(s)
}

impl ConstraintKind {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ConstraintKind::CategoricalEq { .. } => "categorical",
            ConstraintKind::NumericBound { .. } => "numeric",
            ConstraintKind::Spatial { .. } => "spatial",
        }
    }

    /// Short human label of the constrained thing.
    pub fn subject_label(&self) -> String {
        match self {
            ConstraintKind::CategoricalEq { property, .. } => local_name(property).to_string(),
            ConstraintKind::NumericBound { var, property, .. } => {
                property.as_ref().map(|p| local_name(p).to_string()).unwrap_or_else(|| var.name().to_string())
            }
            ConstraintKind::Spatial { .. } => "distance".to_string(),
        }
    }

    fn widenable(&self) -> bool {
        !matches!(self, ConstraintKind::CategoricalEq { .. })
    }
}

fn format_side(side: &BoundSide, value: f64, upper: bool) -> String {
    let op = match (upper, side.strict) {
        (true, true) => "<",
        (true, false) => "<=",
        (false, true) => ">",
        (false, false) => ">=",
    };
    format!("{op} {}", bound_literal(side, value).lexical())
}

fn describe_bounds(lower: Option<(&BoundSide, f64)>, upper: Option<(&BoundSide, f64)>) -> String {
    let mut parts = Vec::new();
    if let Some((s, v)) = lower {
        parts.push(format_side(s, v, false));
    }
    if let Some((s, v)) = upper {
        parts.push(format_side(s, v, true));
    }
    parts.join(" and ")
}

impl Relaxation {
    /// Human readable explanation, e.g. `widened cost from <= 20 to <= 25`.
    pub fn describe(&self, table: &PenaltyTable) -> String {
        let label = self.target.kind.subject_label();
        match (&self.target.kind, self.action) {
            (ConstraintKind::CategoricalEq { value, .. }, _) => format!("dropped {label} = {:?}", value.lexical()),
            (ConstraintKind::NumericBound { .. }, Action::Drop) => format!("dropped {label} bound"),
            (ConstraintKind::Spatial { .. }, Action::Drop) => "dropped distance limit".to_string(),
            (ConstraintKind::NumericBound { lower, upper, .. }, Action::WidenNumeric(k)) => {
                let before = describe_bounds(lower.as_ref().map(|s| (s, s.value)), upper.as_ref().map(|s| (s, s.value)));
                let (lo, hi) = widened_sides(*lower, *upper, self.sides, k, table);
                let after = describe_bounds(
                    lower.as_ref().zip(lo),
                    upper.as_ref().zip(hi),
                );
                format!("widened {label} from {before} to {after}")
            }
            (ConstraintKind::Spatial { radius_km, .. }, Action::WidenRadius(k)) => format!(
                "widened radius from {} km to {} km",
                crate::store::canonical_decimal(*radius_km),
                crate::store::canonical_decimal(radius_km * table.radius_step_factor.powi(k as i32))
            ),
            _ => format!("relaxed {label}"),
        }
    }

    pub fn to_json(&self, table: &PenaltyTable) -> serde_json::Value {
        let (action, steps) = match self.action {
            Action::Drop => ("drop", 0),
            Action::WidenNumeric(k) => ("widen_numeric", k),
            Action::WidenRadius(k) => ("widen_radius", k),
        };
        #[derive(Serialize)]
        struct Entry<'a> {
            target: String,
            constraint: &'a str,
            action: &'a str,
            steps: u32,
            penalty: f64,
            description: String,
        }
        serde_json::to_value(Entry {
            target: self.target.kind.subject_label(),
            constraint: self.target.kind.kind_name(),
            action,
            steps,
            penalty: self.penalty,
            description: self.describe(table),
        })
        .expect("json")
    }
}

/// Decomposes `query` into relaxable constraints, ordered by origin.
///
/// Type patterns and patterns whose object is not a constant string are
/// structural and never relaxed. Only `<`, `<=`, `>`, `>=` comparisons
/// against numbers form numeric bounds.
pub fn classify_constraints(query: &Query) -> Vec<Constraint> {
    let rdf_type = Term::iri(RDF_TYPE).expect("constant");
    let mut out = Vec::new();
    for (i, item) in query.patterns.iter().enumerate() {
        match item {
            PatternItem::Triple(tp) => {
                let (Some(Term::Iri(p)), PatternTerm::Term(Term::Literal(lit))) = (tp.predicate.as_term(), &tp.object)
                else {
                    continue;
                };
                if Term::Iri(p.clone()) == rdf_type || lit.datatype() != Datatype::String {
                    continue;
                }
                out.push(Constraint {
                    origin: Origin::Pattern(i),
                    kind: ConstraintKind::CategoricalEq { property: p.clone(), value: lit.clone() },
                });
            }
            PatternItem::Nearby(n) => out.push(Constraint {
                origin: Origin::Pattern(i),
                kind: ConstraintKind::Spatial { entity: n.entity.clone(), center: n.center, radius_km: n.radius_km },
            }),
        }
    }

    let mut groups: BTreeMap<Variable, (Option<BoundSide>, Option<BoundSide>)> = BTreeMap::new();
    for c in query.filters.iter().flat_map(|f| &f.comparisons) {
        if !is_range_comparison(c) {
            continue;
        }
        let side = BoundSide {
            value: c.value.as_f64().expect("numeric"),
            strict: matches!(c.op, CompareOp::Lt | CompareOp::Gt),
            integer: c.value.datatype() == Datatype::Integer,
        };
        let entry = groups.entry(c.var.clone()).or_default();
        // keep the tightest bound on each side
        if c.op.is_upper_bound() {
            entry.1 = Some(match entry.1 {
                Some(prev) if tighter_upper(&prev, &side) => prev,
                _ => side,
            });
        } else {
            entry.0 = Some(match entry.0 {
                Some(prev) if tighter_lower(&prev, &side) => prev,
                _ => side,
            });
        }
    }
    for (var, (lower, upper)) in groups {
        let property = property_of(query, &var);
        out.push(Constraint {
            origin: Origin::Filter(var.clone()),
            kind: ConstraintKind::NumericBound { var, property, lower, upper },
        });
    }
    out.sort_by(|a, b| a.origin.cmp(&b.origin));
    out
}

fn tighter_upper(a: &BoundSide, b: &BoundSide) -> bool {
    a.value < b.value || (a.value == b.value && a.strict)
}

fn tighter_lower(a: &BoundSide, b: &BoundSide) -> bool {
    a.value > b.value || (a.value == b.value && a.strict)
}

fn is_range_comparison(c: &Comparison) -> bool {
    c.value.is_numeric() && (c.op.is_upper_bound() || c.op.is_lower_bound())
}

/// Predicate of the first plain pattern binding `var` as its object.
fn property_of(query: &Query, var: &Variable) -> Option<Iri> {
    query.patterns.iter().find_map(|item| match item {
        PatternItem::Triple(tp) if tp.object.as_var() == Some(var) => tp.predicate.as_term()?.as_iri().cloned(),
        _ => None,
    })
}

fn widen_up(mut b: f64, steps: u32, fraction: f64) -> f64 {
    for _ in 0..steps {
        let mag = if b == 0.0 { 1.0 } else { b.abs() };
        b += fraction * mag;
    }
    b
}

fn widen_down(mut b: f64, steps: u32, fraction: f64) -> f64 {
    for _ in 0..steps {
        let mag = if b == 0.0 { 1.0 } else { b.abs() };
        b -= fraction * mag;
    }
    b
}

fn widened_sides(
    lower: Option<BoundSide>,
    upper: Option<BoundSide>,
    sides: (bool, bool),
    steps: u32,
    table: &PenaltyTable,
) -> (Option<f64>, Option<f64>) {
    let f = table.numeric_step_fraction;
    let lo = lower.map(|s| if sides.0 { widen_down(s.value, steps, f) } else { s.value });
    let hi = upper.map(|s| if sides.1 { widen_up(s.value, steps, f) } else { s.value });
    (lo, hi)
}

fn bound_literal(side: &BoundSide, value: f64) -> Literal {
    if side.integer && value.fract() == 0.0 && value.abs() < 9.0e15 {
        Literal::integer(value as i64)
    } else {
        Literal::decimal(value).expect("finite bound")
    }
}

/// Penalty of one constraint at `level`.
pub fn level_penalty(kind: &ConstraintKind, level: Level, table: &PenaltyTable) -> f64 {
    match (kind, level) {
        (_, Level::Original) => 0.0,
        (_, Level::Drop) => table.drop_penalty,
        (ConstraintKind::Spatial { .. }, Level::Widen(k)) => table.radius_step_penalty * k as f64,
        (ConstraintKind::NumericBound { .. }, Level::Widen(k)) => table.numeric_step_penalty * k as f64,
        (ConstraintKind::CategoricalEq { .. }, Level::Widen(_)) => table.drop_penalty,
    }
}

/// All levels a constraint can take, in action-rank order.
pub fn levels_for(kind: &ConstraintKind, table: &PenaltyTable) -> Vec<Level> {
    let mut out = vec![Level::Original];
    if kind.widenable() {
        out.extend((1..=table.max_widen_steps).map(Level::Widen));
    }
    out.push(Level::Drop);
    out
}

fn action_of(kind: &ConstraintKind, level: Level) -> Option<Action> {
    match level {
        Level::Original => None,
        Level::Drop => Some(Action::Drop),
        Level::Widen(k) => Some(match kind {
            ConstraintKind::Spatial { .. } => Action::WidenRadius(k),
            _ => Action::WidenNumeric(k),
        }),
    }
}

/// Which sides of each numeric bound widen. Only a side that some stored
/// value of the property violates is widened; when neither side is
/// violated (or the property is unknown) both are.
pub fn violated_sides(constraint: &Constraint, store: &TripleStore) -> (bool, bool) {
    let ConstraintKind::NumericBound { property: Some(p), lower: Some(lo), upper: Some(hi), .. } = &constraint.kind
    else {
        return (true, true);
    };
    let mut below = false;
    let mut above = false;
    for t in store.match_bound(None, Some(&Term::Iri(p.clone())), None) {
        if let Some(v) = t.object().as_literal().and_then(Literal::as_f64) {
            below |= v < lo.value || (lo.strict && v == lo.value);
            above |= v > hi.value || (hi.strict && v == hi.value);
        }
    }
    if below || above {
        (below, above)
    } else {
        (true, true)
    }
}

/// Rewrites `query` with each constraint at the given level. `sides` gives,
/// per constraint, which numeric sides widen.
pub fn relaxed_query(
    query: &Query,
    constraints: &[Constraint],
    levels: &[Level],
    sides: &[(bool, bool)],
    table: &PenaltyTable,
) -> Query {
    let mut q = query.clone();
    let mut drop_patterns = BTreeSet::new();
    for ((c, &level), &side) in constraints.iter().zip(levels).zip(sides) {
        if level == Level::Original {
            continue;
        }
        match (&c.origin, &c.kind) {
            (Origin::Pattern(i), ConstraintKind::Spatial { radius_km, .. }) => match level {
                Level::Drop => {
                    drop_patterns.insert(*i);
                }
                Level::Widen(k) => {
                    if let PatternItem::Nearby(n) = &mut q.patterns[*i] {
                        n.radius_km = radius_km * table.radius_step_factor.powi(k as i32);
                    }
                }
                Level::Original => {}
            },
            (Origin::Pattern(i), _) => {
                drop_patterns.insert(*i);
            }
            (Origin::Filter(var), ConstraintKind::NumericBound { lower, upper, .. }) => {
                for f in &mut q.filters {
                    f.comparisons.retain(|cmp| !(cmp.var == *var && is_range_comparison(cmp)));
                }
                q.filters.retain(|f| !f.comparisons.is_empty());
                if let Level::Widen(k) = level {
                    let (lo, hi) = widened_sides(*lower, *upper, side, k, table);
                    let mut comparisons = Vec::new();
                    if let (Some(s), Some(v)) = (lower, lo) {
                        let op = if s.strict { CompareOp::Gt } else { CompareOp::Ge };
                        comparisons.push(Comparison { var: var.clone(), op, value: bound_literal(s, v) });
                    }
                    if let (Some(s), Some(v)) = (upper, hi) {
                        let op = if s.strict { CompareOp::Lt } else { CompareOp::Le };
                        comparisons.push(Comparison { var: var.clone(), op, value: bound_literal(s, v) });
                    }
                    q.filters.push(crate::query::Filter { comparisons });
                }
            }
            (Origin::Filter(_), _) => {}
        }
    }
    q.patterns = q
        .patterns
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !drop_patterns.contains(i))
        .map(|(_, p)| p)
        .collect();
    q
}

/// Applies a single relaxation to `query`.
pub fn apply_relaxation(query: &Query, relaxation: &Relaxation, table: &PenaltyTable) -> Result<Query, RelaxError> {
    let constraints = classify_constraints(query);
    let idx = constraints.iter().position(|c| *c == relaxation.target).ok_or(RelaxError::TargetAbsent)?;
    let mut levels = vec![Level::Original; constraints.len()];
    levels[idx] = match relaxation.action {
        Action::Drop => Level::Drop,
        Action::WidenNumeric(k) | Action::WidenRadius(k) => Level::Widen(k),
    };
    let mut sides = vec![(true, true); constraints.len()];
    sides[idx] = relaxation.sides;
    Ok(relaxed_query(query, &constraints, &levels, &sides, table))
}

/// Penalties are compared on a fixed grid so that sums are exact.
/// (penalty key, tie-break signature, levels)
type FrontierEntry = (i64, Vec<(usize, usize)>, Vec<Level>);

fn penalty_key(p: f64) -> i64 {
    (p * 1e6).round() as i64
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RelaxOptions {
    pub budget: Budget,
    /// Keep exploring deeper penalty levels after the first productive one.
    pub all_levels: bool,
}

/// Best-first search over relaxation states.
pub fn relax_search(
    query: &Query,
    store: &TripleStore,
    geo: &GeoIndex,
    table: &PenaltyTable,
    options: RelaxOptions,
) -> Result<RelaxOutcome, RelaxError> {
    let budget = options.budget;
    // also rejects NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(budget.max_penalty >= 0.0) {
        return Err(RelaxError::Budget("max_penalty must be non-negative".into()));
    }
    if budget.max_states == 0 {
        return Err(RelaxError::Budget("max_states must be at least 1".into()));
    }
    let constraints = classify_constraints(query);
    let sides: Vec<(bool, bool)> = constraints.iter().map(|c| violated_sides(c, store)).collect();
    let level_sets: Vec<Vec<Level>> = constraints.iter().map(|c| levels_for(&c.kind, table)).collect();

    let penalty_of = |levels: &[Level]| -> f64 {
        constraints.iter().zip(levels).map(|(c, &l)| level_penalty(&c.kind, l, table)).sum()
    };
    // tie-break signature: relaxed constraints by origin with their action rank
    let signature = |levels: &[Level]| -> Vec<(usize, usize)> {
        levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l != Level::Original)
            .map(|(i, l)| (i, level_sets[i].iter().position(|x| x == l).expect("level in set")))
            .collect()
    };

    let start = vec![Level::Original; constraints.len()];
    let mut frontier: BTreeSet<FrontierEntry> = BTreeSet::new();
    let mut seen: BTreeSet<Vec<Level>> = BTreeSet::new();
    frontier.insert((0, Vec::new(), start.clone()));
    seen.insert(start);

    let mut outcome = RelaxOutcome::default();
    let mut found: HashMap<Vec<Option<Term>>, ()> = HashMap::new();
    let mut productive_level: Option<i64> = None;
    let mut cache: HashMap<String, Vec<Binding>> = HashMap::new();

    while let Some((key, _, levels)) = frontier.pop_first() {
        if let Some(level) = productive_level {
            if key > level && !options.all_levels {
                break;
            }
        }
        if outcome.states_explored >= budget.max_states {
            outcome.exhausted = outcome.results.is_empty();
            return Ok(finish(outcome, query));
        }
        outcome.states_explored += 1;
        let penalty = penalty_of(&levels);

        let relaxed = relaxed_query(query, &constraints, &levels, &sides, table);
        let text = relaxed.to_string();
        let rows = cache.entry(text).or_insert_with(|| execute(&relaxed, store, geo).rows).clone();
        if !rows.is_empty() {
            productive_level.get_or_insert(key);
            let applied: Vec<Relaxation> = constraints
                .iter()
                .zip(&levels)
                .zip(&sides)
                .filter_map(|((c, &l), &side)| {
                    action_of(&c.kind, l).map(|action| Relaxation {
                        target: c.clone(),
                        action,
                        penalty: level_penalty(&c.kind, l, table),
                        sides: side,
                    })
                })
                .collect();
            for row in rows {
                let k = row_key(&query.select, &row);
                if found.insert(k, ()).is_none() {
                    outcome.results.push(RelaxedResult { binding: row, penalty, applied: applied.clone() });
                }
            }
        }

        for (i, set) in level_sets.iter().enumerate() {
            let pos = set.iter().position(|l| *l == levels[i]).expect("level in set");
            let mut successors = Vec::new();
            match levels[i] {
                Level::Original => {
                    successors.extend(set.get(1).copied());
                    if set.get(1) != Some(&Level::Drop) {
                        successors.push(Level::Drop);
                    }
                }
                Level::Widen(_) => {
                    successors.extend(set.get(pos + 1).copied());
                }
                Level::Drop => {}
            }
            for next in successors {
                let mut child = levels.clone();
                child[i] = next;
                let p = penalty_of(&child);
                if p > budget.max_penalty + 1e-9 || seen.contains(&child) {
                    continue;
                }
                seen.insert(child.clone());
                let sig = signature(&child);
                frontier.insert((penalty_key(p), sig, child));
            }
        }
    }
    outcome.exhausted = outcome.results.is_empty();
    Ok(finish(outcome, query))
}

fn finish(mut outcome: RelaxOutcome, query: &Query) -> RelaxOutcome {
    outcome.results.sort_by(|a, b| {
        penalty_key(a.penalty)
            .cmp(&penalty_key(b.penalty))
            .then_with(|| row_key(&query.select, &a.binding).cmp(&row_key(&query.select, &b.binding)))
    });
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;
    use crate::store::Triple;

    const NS: &str = "http://localhost:8080/";

    fn store() -> TripleStore {
        let mut st = TripleStore::new();
        let iri = |l: &str| Term::iri(&format!("{NS}{l}")).unwrap();
        for (name, meal, cost) in [("Darshini", "Lunch", 100), ("Kamat", "Dinner", 50), ("Upahar", "Breakfast", 25)] {
            let s = iri(name);
            let lit = |v: &str| Term::Literal(Literal::string(v).unwrap());
            st.insert(Triple::new(s.clone(), iri("name"), lit(name)).unwrap());
            st.insert(Triple::new(s.clone(), iri("foodtype"), lit("Veg")).unwrap());
            st.insert(Triple::new(s.clone(), iri("mealtype"), lit(meal)).unwrap());
            st.insert(Triple::new(s, iri("cost"), Term::Literal(Literal::integer(cost))).unwrap());
        }
        st
    }

    fn q(body: &str) -> Query {
        parse_query(&format!("PREFIX rest: <{NS}>\n{body}")).unwrap()
    }

    fn search(query: &Query) -> RelaxOutcome {
        relax_search(query, &store(), &GeoIndex::default(), &PenaltyTable::default(), RelaxOptions::default()).unwrap()
    }

    fn name(r: &RelaxedResult) -> String {
        r.binding.values().next().unwrap().as_literal().unwrap().lexical().to_string()
    }

    #[test]
    fn cost_le_20_finds_upahar() {
        let out = search(&q("SELECT ?name WHERE { ?r rest:name ?name ; rest:cost ?cost FILTER(?cost <= 20) }"));
        assert_eq!(out.results.len(), 1);
        assert_eq!(name(&out.results[0]), "Upahar");
        assert_eq!(out.results[0].penalty, 3.0);
        assert_eq!(out.results[0].applied.len(), 1);
        assert_eq!(out.results[0].applied[0].action, Action::WidenNumeric(1));
        assert!(!out.exhausted);
    }

    #[test]
    fn satisfiable_has_zero_penalty() {
        let query = q(r#"SELECT ?name WHERE { ?r rest:name ?name ; rest:foodtype "Veg" }"#);
        let out = search(&query);
        let plain = execute(&query, &store(), &GeoIndex::default());
        assert_eq!(out.results.iter().map(|r| r.binding.clone()).collect::<Vec<_>>(), plain.rows);
        assert!(out.results.iter().all(|r| r.penalty == 0.0 && r.applied.is_empty()));
    }

    #[test]
    fn supper_drops_mealtype() {
        let out =
            search(&q(r#"SELECT ?name WHERE { ?r rest:name ?name ; rest:mealtype "Supper" ; rest:foodtype "Veg" }"#));
        assert_eq!(out.results.len(), 3);
        assert!(out.results.iter().all(|r| r.penalty == 10.0));
        let ConstraintKind::CategoricalEq { property, .. } = &out.results[0].applied[0].target.kind else { panic!() };
        assert_eq!(property.as_str(), format!("{NS}mealtype"));
    }

    #[test]
    fn classify_veg_lunch_query() {
        let query = parse_query(include_str!("../../../fixtures/veg_lunch.rq")).unwrap();
        let kinds: Vec<_> = classify_constraints(&query).into_iter().map(|c| c.kind).collect();
        assert_eq!(kinds.len(), 3);
        assert!(matches!(kinds[0], ConstraintKind::Spatial { radius_km, .. } if radius_km == 5.0));
        assert!(
            matches!(&kinds[1], ConstraintKind::CategoricalEq { value, .. } if value.lexical() == "Veg")
        );
        assert!(
            matches!(&kinds[2], ConstraintKind::CategoricalEq { value, .. } if value.lexical() == "Lunch")
        );
    }

    #[test]
    fn classify_between_and_projection_only() {
        let query = q("SELECT ?name WHERE { ?r rest:name ?name ; rest:cost ?cost FILTER(?cost >= 50 && ?cost <= 100) }");
        let cs = classify_constraints(&query);
        assert_eq!(cs.len(), 1);
        assert!(matches!(
            &cs[0].kind,
            ConstraintKind::NumericBound { lower: Some(l), upper: Some(u), .. } if l.value == 50.0 && u.value == 100.0
        ));
        assert!(classify_constraints(&q("SELECT ?name WHERE { ?r rest:name ?name }")).is_empty());
    }

    #[test]
    fn apply_examples() {
        let table = PenaltyTable::default();
        let query = parse_query(include_str!("../../../fixtures/veg_lunch.rq")).unwrap();
        let cs = classify_constraints(&query);
        let widened = apply_relaxation(
            &query,
            &Relaxation { target: cs[0].clone(), action: Action::WidenRadius(1), penalty: 2.0, sides: (true, true) },
            &table,
        )
        .unwrap();
        let PatternItem::Nearby(n) = &widened.patterns[0] else { panic!() };
        assert_eq!(n.radius_km, 7.5);
        assert!(matches!(&query.patterns[0], PatternItem::Nearby(n) if n.radius_km == 5.0));

        let dropped = apply_relaxation(
            &query,
            &Relaxation { target: cs[2].clone(), action: Action::Drop, penalty: 10.0, sides: (true, true) },
            &table,
        )
        .unwrap();
        assert_eq!(dropped.patterns.len(), query.patterns.len() - 1);
        assert!(!dropped.to_string().contains("Lunch"));

        let le = q("SELECT ?c WHERE { ?r rest:cost ?c FILTER(?c <= 100) }");
        let c = classify_constraints(&le).remove(0);
        let w = apply_relaxation(&le, &Relaxation { target: c, action: Action::WidenNumeric(2), penalty: 6.0, sides: (true, true) }, &table)
            .unwrap();
        assert_eq!(w.filters[0].comparisons[0].value.as_f64(), Some(156.25));

        let other = classify_constraints(&le).remove(0);
        assert!(apply_relaxation(&query, &Relaxation { target: other, action: Action::Drop, penalty: 10.0, sides: (true, true) }, &table)
            .is_err());
    }

    #[test]
    fn exhausted_marker() {
        let query = q(r#"SELECT ?name WHERE { ?r rest:name ?name ; rest:mealtype "Supper" }"#);
        let out = relax_search(
            &query,
            &store(),
            &GeoIndex::default(),
            &PenaltyTable::default(),
            RelaxOptions { budget: Budget { max_penalty: 5.0, max_states: 10 }, all_levels: false },
        )
        .unwrap();
        assert!(out.results.is_empty());
        assert!(out.exhausted);
    }

    #[test]
    fn between_widens_violated_side_only() {
        let query = q("SELECT ?name WHERE { ?r rest:name ?name ; rest:cost ?c FILTER(?c >= 101 && ?c <= 200) }");
        let cs = classify_constraints(&query);
        assert_eq!(violated_sides(&cs[0], &store()), (true, false));
        let out = search(&query);
        assert_eq!(name(&out.results[0]), "Darshini");
        assert_eq!(out.results[0].penalty, 3.0);
        let desc = out.results[0].applied[0].describe(&PenaltyTable::default());
        assert!(desc.contains("<= 200") && desc.contains(">= 75.75"), "{desc}");
    }

    #[test]
    fn penalty_table_toml() {
        let t = PenaltyTable::from_toml("drop_penalty = 12.0\nmax_widen_steps = 2\n").unwrap();
        assert_eq!(t.drop_penalty, 12.0);
        assert_eq!(t.numeric_step_penalty, 3.0);
        assert!(PenaltyTable::from_toml("bogus = 1").is_err());
        assert!(PenaltyTable::from_toml("radius_step_factor = 0.5").is_err());
    }

    #[test]
    fn all_levels_flag_returns_deeper_rows() {
        let query = q("SELECT ?name WHERE { ?r rest:name ?name ; rest:cost ?cost FILTER(?cost <= 20) }");
        let out = relax_search(
            &query,
            &store(),
            &GeoIndex::default(),
            &PenaltyTable::default(),
            RelaxOptions { budget: Budget::default(), all_levels: true },
        )
        .unwrap();
        let names: Vec<_> = out.results.iter().map(|r| (name(r), r.penalty)).collect();
        assert_eq!(names[0], ("Upahar".to_string(), 3.0));
        assert_eq!(names.len(), 3);
        assert!(out.results.windows(2).all(|w| w[0].penalty <= w[1].penalty));
    }
}
