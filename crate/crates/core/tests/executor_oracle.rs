use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ypsp_core::geo::GeoIndex;
use ypsp_core::query::execute;
use ypsp_core::testkit::{brute_force_execute, gazetteer, random_query, random_store, restaurant_schema};

fn check(seed: u64, min_triples: usize, queries: usize) {
    let schema = restaurant_schema();
    let gaz = gazetteer();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store = random_store(&mut rng, &schema, min_triples);
    let geo = GeoIndex::build(&store, &schema);
    let mut non_empty = 0;
    for _ in 0..queries {
        let q = random_query(&mut rng, &schema, &gaz);
        let got = execute(&q, &store, &geo);
        let want = brute_force_execute(&q, &store, &schema);
        assert_eq!(got, want, "query:\n{q}");
        non_empty += usize::from(!got.is_empty());
    }
    // the generator should not be trivially empty
    assert!(non_empty * 4 >= queries, "only {non_empty} of {queries} non-empty");
}

#[test]
fn random_templates_small_store() {
    check(1, 400, 100);
}

#[test]
fn random_templates_10k_store() {
    check(2, 10_000, 100);
}
