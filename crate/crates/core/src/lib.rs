//! Semantic yellow-pages engine: triple store, schema, SPARQL subset with a
//! `nearby` extension, penalty-based relaxation and record ingest.

pub mod directory;
pub mod geo;
pub mod ingest;
pub mod query;
pub mod relax;
pub mod schema;
pub mod store;
#[doc(hidden)]
pub mod testkit;

pub use directory::{Directory, DirectoryError, StructuredQuery};
