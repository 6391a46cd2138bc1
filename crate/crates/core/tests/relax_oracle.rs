use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ypsp_core::directory::structured_to_sparql;
use ypsp_core::geo::GeoIndex;
use ypsp_core::query::{execute, parse_query, row_key, ResultSet};
use ypsp_core::relax::{apply_relaxation, relax_search, Budget, PenaltyTable, RelaxOptions};
use ypsp_core::testkit::{
    brute_force_min_penalty, gazetteer, random_store, random_structured, restaurant_schema,
};

#[test]
fn search_finds_minimal_penalty() {
    let schema = restaurant_schema();
    let gaz = gazetteer();
    let table = PenaltyTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let started = Instant::now();
    let mut relaxed = 0;
    for round in 0..8 {
        // sparse stores make relaxation necessary more often
        let store = random_store(&mut rng, &schema, 60 + 40 * round);
        let geo = GeoIndex::build(&store, &schema);
        for n in 1..=4 {
            for _ in 0..6 {
                let sq = random_structured(&mut rng, Some(n));
                let q = parse_query(&structured_to_sparql(&sq, &schema, &gaz).unwrap()).unwrap();
                let out = relax_search(&q, &store, &geo, &table, RelaxOptions::default()).unwrap();
                let oracle = brute_force_min_penalty(&q, &store, &schema, &table, Budget::default().max_penalty);
                match oracle {
                    None => assert!(out.exhausted && out.results.is_empty(), "query:\n{q}"),
                    Some((p, rows)) => {
                        assert!(!out.exhausted);
                        assert!(out.results.iter().all(|r| (r.penalty - p).abs() < 1e-9), "query:\n{q}");
                        let mut got = ResultSet::new(q.select.clone());
                        got.rows = out.results.iter().map(|r| r.binding.clone()).collect();
                        got.canonicalize();
                        assert_eq!(got, rows, "query:\n{q}");
                        relaxed += usize::from(p > 0.0);
                    }
                }
            }
        }
    }
    assert!(relaxed > 10, "only {relaxed} queries needed relaxation");
    assert!(started.elapsed().as_secs() < 30);
}

#[test]
fn applied_relaxations_reproduce_rows() {
    let schema = restaurant_schema();
    let gaz = gazetteer();
    let table = PenaltyTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let store = random_store(&mut rng, &schema, 300);
    let geo = GeoIndex::build(&store, &schema);
    for _ in 0..60 {
        let sq = random_structured(&mut rng, Some(3));
        let q = parse_query(&structured_to_sparql(&sq, &schema, &gaz).unwrap()).unwrap();
        let out = relax_search(&q, &store, &geo, &table, RelaxOptions::default()).unwrap();
        for r in &out.results {
            let mut q2 = q.clone();
            for rel in &r.applied {
                q2 = apply_relaxation(&q2, rel, &table).unwrap();
            }
            let total: f64 = r.applied.iter().map(|a| a.penalty).sum();
            assert!((total - r.penalty).abs() < 1e-9);
            let rows = execute(&q2, &store, &geo);
            let key = row_key(&q.select, &r.binding);
            assert!(rows.rows.iter().any(|b| row_key(&q.select, b) == key), "query:\n{q}");
        }
    }
}

#[test]
fn all_levels_is_nondecreasing() {
    let schema = restaurant_schema();
    let gaz = gazetteer();
    let table = PenaltyTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let store = random_store(&mut rng, &schema, 200);
    let geo = GeoIndex::build(&store, &schema);
    let opts = RelaxOptions { all_levels: true, ..Default::default() };
    for _ in 0..30 {
        let sq = random_structured(&mut rng, Some(2));
        let q = parse_query(&structured_to_sparql(&sq, &schema, &gaz).unwrap()).unwrap();
        let out = relax_search(&q, &store, &geo, &table, opts).unwrap();
        assert!(out.results.windows(2).all(|w| w[0].penalty <= w[1].penalty));
    }
}
