//! Record registration and bulk N-Triples I/O.

mod ntriples;
mod register;

pub use ntriples::{export_ntriples, load_ntriples, parse_ntriples, NTriplesError};
pub use register::{slug, IngestError, RegistrationReceipt, Registry};
