//! SPARQL subset: parsing, evaluation and JSON results.

mod ast;
mod exec;
mod parser;
mod results;

pub use ast::*;
pub use exec::{execute, row_key, Binding, ResultSet};
#[allow(unused_imports)]
pub(crate) use exec::{filters_hold, slot_of, Row, Slot};
pub use parser::{parse_query, ParseError};
pub use results::{binding_to_json, from_sparql_json, to_sparql_json, ResultsError};
