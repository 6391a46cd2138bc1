//! Random fixtures and index-free reference evaluators for tests.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::directory::{structured_to_sparql, StructuredQuery};
use crate::geo::{haversine_km, Gazetteer, LatLon};
use crate::query::{parse_query, Binding, PatternItem, Query, ResultSet};
use crate::relax::{classify_constraints, level_penalty, levels_for, relaxed_query, violated_sides, Level, PenaltyTable};
use crate::schema::{BusinessRecord, Schema, LAT, LONG};
use crate::store::{Literal, PatternTerm, Term, Triple, TripleStore, Variable};

pub const LOCALITIES: &[&str] =
    &["Adugodi", "Koramangala", "Vijayanagar", "Gandhinagar", "Jayanagar", "Rajajinagar", "Indiranagar"];
pub const MEALS: &[&str] = &["Breakfast", "Lunch", "Dinner", "Snacks"];
pub const FOODS: &[&str] = &["Veg", "NonVeg", "Jain"];

/// Bangalore bounding box used for random coordinates.
pub const LAT_RANGE: (f64, f64) = (12.85, 13.10);
pub const LON_RANGE: (f64, f64) = (77.45, 77.75);

pub fn restaurant_schema() -> Schema {
    Schema::load(include_bytes!("../../../fixtures/schema.json")).expect("fixture schema")
}

pub fn gazetteer() -> Gazetteer {
    Gazetteer::parse(include_str!("../../../fixtures/gazetteer.tsv")).expect("fixture gazetteer")
}

/// A random restaurant record. Roughly one in ten has no coordinates.
pub fn random_record<R: Rng>(rng: &mut R, i: usize) -> BusinessRecord {
    let mut r = BusinessRecord::new("Restaurant").with("name", format!("R{i:05}"));
    let k = rng.random_range(1..=2);
    for loc in LOCALITIES.choose_multiple(rng, k) {
        r = r.with("location", loc);
    }
    let k = rng.random_range(1..=2);
    for meal in MEALS.choose_multiple(rng, k) {
        r = r.with("mealtype", meal);
    }
    r = r.with("foodtype", FOODS.choose(rng).expect("non-empty"));
    if rng.random_bool(0.9) {
        r = r.with("cost", rng.random_range(1..=60) * 10);
    }
    r = r.with("address", format!("{} Cross, Block {}", rng.random_range(1..40), rng.random_range(1..9)));
    if rng.random_bool(0.9) {
        let lat = rng.random_range(LAT_RANGE.0..LAT_RANGE.1);
        let lon = rng.random_range(LON_RANGE.0..LON_RANGE.1);
        r = r.with(LAT, format!("{lat:.6}")).with(LONG, format!("{lon:.6}"));
    }
    r
}

/// Random restaurants until the store holds at least `min_triples`.
pub fn random_store<R: Rng>(rng: &mut R, schema: &Schema, min_triples: usize) -> TripleStore {
    let mut store = TripleStore::new();
    let mut i = 0;
    while store.len() < min_triples {
        let rec = random_record(rng, i);
        let iri = schema.iri(&format!("Restaurant/r{i:05}"));
        store.extend(schema.record_to_triples(&rec, &iri).expect("valid random record"));
        i += 1;
    }
    store
}

/// A random request from the structured template space, with
/// `n_constraints` relaxable constraints when given.
pub fn random_structured<R: Rng>(rng: &mut R, n_constraints: Option<usize>) -> StructuredQuery {
    let mut sq = StructuredQuery::new("Restaurant");
    let n = n_constraints.unwrap_or_else(|| rng.random_range(0..=4));
    let mut kinds = vec!["foodtype", "mealtype", "location", "cost", "near"];
    kinds.shuffle(rng);
    for kind in kinds.into_iter().take(n) {
        match kind {
            "foodtype" => sq = sq.eq("foodtype", *FOODS.choose(rng).expect("non-empty")),
            "mealtype" => sq = sq.eq("mealtype", *MEALS.choose(rng).expect("non-empty")),
            "location" => sq = sq.eq("location", *LOCALITIES.choose(rng).expect("non-empty")),
            "cost" => {
                let a = rng.random_range(0..=700) as f64;
                let b = a + rng.random_range(0..=300) as f64;
                sq = match rng.random_range(0..3) {
                    0 => sq.range("cost", Some(a), None),
                    1 => sq.range("cost", None, Some(a)),
                    _ => sq.range("cost", Some(a), Some(b)),
                };
            }
            _ => {
                let radius = rng.random_range(0.2..8.0);
                sq = if rng.random_bool(0.5) {
                    let lat = rng.random_range(LAT_RANGE.0..LAT_RANGE.1);
                    let lon = rng.random_range(LON_RANGE.0..LON_RANGE.1);
                    sq.near_point(lat, lon, radius)
                } else {
                    sq.near_locality(LOCALITIES.choose(rng).expect("non-empty"), radius)
                };
            }
        }
    }
    if rng.random_bool(0.5) {
        let mut fields = ["name", "address", "cost", "location", "mealtype"];
        fields.shuffle(rng);
        let k = rng.random_range(1..=3);
        sq.select = Some(fields[..k].iter().map(|s| s.to_string()).collect());
    }
    sq
}

pub fn random_query<R: Rng>(rng: &mut R, schema: &Schema, gazetteer: &Gazetteer) -> Query {
    let sq = random_structured(rng, None);
    let text = structured_to_sparql(&sq, schema, gazetteer).expect("template query");
    parse_query(&text).expect("template output parses")
}

type Row = BTreeMap<String, Term>;

fn key(pt: &PatternTerm) -> Option<String> {
    match pt {
        PatternTerm::Var(v) => Some(format!("?{}", v.name())),
        PatternTerm::Term(Term::Blank(b)) => Some(format!("_:{}", b.label())),
        _ => None,
    }
}

fn unify(pt: &PatternTerm, value: &Term, row: &mut Row) -> bool {
    match key(pt) {
        Some(k) => match row.get(&k) {
            Some(bound) => bound == value,
            None => {
                row.insert(k, value.clone());
                true
            }
        },
        None => match pt {
            PatternTerm::Any => true,
            PatternTerm::Term(t) => t == value,
            PatternTerm::Var(_) => unreachable!(),
        },
    }
}

/// Positions of entities carrying exactly one numeric lat and long value,
/// read by scanning every triple.
pub fn scan_positions(store: &TripleStore, schema: &Schema) -> Vec<(Term, LatLon)> {
    let lat_p = Term::Iri(schema.iri(LAT));
    let lon_p = Term::Iri(schema.iri(LONG));
    let mut lats: BTreeMap<Term, Vec<f64>> = BTreeMap::new();
    let mut lons: BTreeMap<Term, Vec<f64>> = BTreeMap::new();
    for t in store.iter() {
        let v = t.object().as_literal().filter(|l| l.is_numeric()).and_then(Literal::as_f64);
        if *t.predicate() == lat_p {
            lats.entry(t.subject().clone()).or_default().extend(v);
        } else if *t.predicate() == lon_p {
            lons.entry(t.subject().clone()).or_default().extend(v);
        }
    }
    lats.into_iter()
        .filter_map(|(s, la)| {
            let lo = lons.get(&s)?;
            match (la.as_slice(), lo.as_slice()) {
                ([a], [b]) => LatLon::new(*a, *b).ok().map(|p| (s, p)),
                _ => None,
            }
        })
        .collect()
}

/// Nested-loop evaluation over every triple; no index is consulted.
pub fn brute_force_execute(query: &Query, store: &TripleStore, schema: &Schema) -> ResultSet {
    let mut out = ResultSet::new(query.select.clone());
    if query.patterns.is_empty() {
        return out;
    }
    let all: Vec<Triple> = store.iter().collect();
    let positions = scan_positions(store, schema);

    // solutions of each pattern on its own
    let mut per_pattern: Vec<Vec<Row>> = Vec::new();
    for item in &query.patterns {
        let mut sols = Vec::new();
        match item {
            PatternItem::Triple(tp) => {
                for t in &all {
                    let mut row = Row::new();
                    if unify(&tp.subject, t.subject(), &mut row)
                        && unify(&tp.predicate, t.predicate(), &mut row)
                        && unify(&tp.object, t.object(), &mut row)
                    {
                        sols.push(row);
                    }
                }
            }
            PatternItem::Nearby(n) => {
                for (entity, pos) in &positions {
                    if haversine_km(n.center, *pos) <= n.radius_km {
                        sols.push([(format!("?{}", n.entity.name()), entity.clone())].into());
                    }
                }
            }
        }
        per_pattern.push(sols);
    }

    let mut rows: Vec<Row> = vec![Row::new()];
    for sols in &per_pattern {
        let mut next = Vec::new();
        for row in &rows {
            for sol in sols {
                if sol.iter().all(|(k, v)| row.get(k).is_none_or(|b| b == v)) {
                    let mut merged = row.clone();
                    merged.extend(sol.iter().map(|(k, v)| (k.clone(), v.clone())));
                    next.push(merged);
                }
            }
        }
        rows = next;
    }

    let mut seen = BTreeSet::new();
    for row in rows {
        let ok = query.filters.iter().flat_map(|f| &f.comparisons).all(|c| {
            match row.get(&format!("?{}", c.var.name())) {
                Some(Term::Literal(l)) => l.value_cmp(&c.value).is_some_and(|o| c.op.holds(o)),
                _ => false,
            }
        });
        if !ok {
            continue;
        }
        let projected: Binding = query
            .select
            .iter()
            .filter_map(|v| row.get(&format!("?{}", v.name())).map(|t| (v.clone(), t.clone())))
            .collect();
        let k: Vec<Option<Term>> = query.select.iter().map(|v| projected.get(v).cloned()).collect();
        if seen.insert(k) {
            out.rows.push(projected);
        }
    }
    out.rows.sort_by_key(|r| query.select.iter().map(|v| r.get(v).cloned()).collect::<Vec<_>>());
    out
}

/// Lowest penalty of any relaxation state (within `max_penalty`) whose
/// query has rows, found by enumerating every combination of levels.
pub fn brute_force_min_penalty(
    query: &Query,
    store: &TripleStore,
    schema: &Schema,
    table: &PenaltyTable,
    max_penalty: f64,
) -> Option<(f64, ResultSet)> {
    let constraints = classify_constraints(query);
    let sides: Vec<(bool, bool)> = constraints.iter().map(|c| violated_sides(c, store)).collect();
    let sets: Vec<Vec<Level>> = constraints.iter().map(|c| levels_for(&c.kind, table)).collect();
    let mut states: Vec<(f64, Vec<Level>)> = Vec::new();
    let mut idx = vec![0usize; sets.len()];
    'outer: loop {
        let levels: Vec<Level> = idx.iter().zip(&sets).map(|(&i, s)| s[i]).collect();
        let penalty: f64 = constraints.iter().zip(&levels).map(|(c, &l)| level_penalty(&c.kind, l, table)).sum();
        if penalty <= max_penalty + 1e-9 {
            states.push((penalty, levels));
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                break 'outer;
            }
            idx[pos] += 1;
            if idx[pos] < sets[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
    states.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(f64, ResultSet)> = None;
    for (penalty, levels) in states {
        if let Some((p, _)) = &best {
            if penalty > *p + 1e-9 {
                break;
            }
        }
        let q = relaxed_query(query, &constraints, &levels, &sides, table);
        let rs = brute_force_execute(&q, store, schema);
        if rs.is_empty() {
            continue;
        }
        match &mut best {
            None => best = Some((penalty, rs)),
            Some((_, acc)) => {
                acc.rows.extend(rs.rows);
                acc.canonicalize();
            }
        }
    }
    best
}

pub fn var(name: &str) -> Variable {
    Variable::new(name).expect("valid variable")
}
