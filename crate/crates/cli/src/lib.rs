//! Batch front end for the `iqc-core` gain certificates: TOML run
//! configurations, sweep tables, JSON results and certificate replay.

pub mod certificate;
pub mod cli;
pub mod config;
pub mod run;

pub use certificate::{replay, CertificateDump, ReplayReport};
pub use config::{RunConfig, SCHEMA_VERSION};
pub use run::{execute, format_table, Results, RunOutput};
