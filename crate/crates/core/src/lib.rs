//! Game balance analytics over recorded combat logs and player surveys.

pub mod ingest;
pub mod model;
pub mod roles;
pub mod stats;
pub mod store;
pub mod stub_server;
pub mod distributions;
pub mod metrics;
pub mod survey;
pub mod report;
pub mod reconcile;
pub mod documents;
