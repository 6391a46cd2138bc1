use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ypsp_core::ingest::{export_ntriples, load_ntriples};
use ypsp_core::query::parse_query;
use ypsp_core::store::{Triple, TripleStore};
use ypsp_core::testkit::{gazetteer, random_query, random_record, random_store, restaurant_schema};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn record_triples_record(seed in any::<u64>()) {
        let schema = restaurant_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = random_record(&mut rng, 1);
        let iri = schema.iri("Restaurant/r1");
        let triples: BTreeSet<Triple> = schema.record_to_triples(&rec, &iri).unwrap().into_iter().collect();
        let mut store = TripleStore::new();
        store.extend(triples.clone());
        let back = schema.record_from_store(&store, &iri).unwrap();
        prop_assert!(schema.validate_record(&back).unwrap().is_empty());
        let again: BTreeSet<Triple> = schema.record_to_triples(&back, &iri).unwrap().into_iter().collect();
        prop_assert_eq!(again, triples);
    }

    #[test]
    fn ntriples_export_load(seed in any::<u64>()) {
        let schema = restaurant_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = random_store(&mut rng, &schema, 120);
        let bytes = export_ntriples(&store);
        let mut loaded = TripleStore::new();
        prop_assert_eq!(load_ntriples(&bytes, &mut loaded).unwrap(), store.len());
        prop_assert_eq!(&loaded, &store);
        prop_assert_eq!(export_ntriples(&loaded), bytes);
    }

    #[test]
    fn query_print_parse(seed in any::<u64>()) {
        let schema = restaurant_schema();
        let gaz = gazetteer();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_query(&mut rng, &schema, &gaz);
        let printed = q.to_string();
        let reparsed = parse_query(&printed).unwrap();
        prop_assert_eq!(&reparsed, &q);
        prop_assert_eq!(reparsed.to_string(), printed);
    }
}

#[test]
fn veg_lunch_query_print_parse() {
    let q = parse_query(include_str!("../../../fixtures/veg_lunch.rq")).unwrap();
    assert_eq!(parse_query(&q.to_string()).unwrap(), q);
}

#[test]
fn fixture_entities_conform_to_schema() {
    let schema = restaurant_schema();
    let mut store = TripleStore::new();
    load_ntriples(include_bytes!("../../../fixtures/restaurants.nt"), &mut store).unwrap();
    let subjects: BTreeSet<_> = store.iter().map(|t| t.subject().clone()).collect();
    assert_eq!(subjects.len(), 3);
    for s in subjects {
        let iri = s.as_iri().unwrap();
        let rec = schema.record_from_store(&store, iri).unwrap();
        assert!(schema.validate_record(&rec).unwrap().is_empty(), "{iri:?}");
        let triples = schema.record_to_triples(&rec, iri).unwrap();
        assert_eq!(triples.len(), store.match_bound(Some(&s), None, None).len());
    }
}
