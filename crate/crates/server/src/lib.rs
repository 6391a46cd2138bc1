//! HTTP service, federation client and command line for the directory.

pub mod cli;
pub mod config;
pub mod federation;
pub mod service;

pub use config::Config;
pub use federation::{fanout, merge_results, EndpointConfig, EndpointStatus, FederatedResult};
pub use service::{router, AppState};
