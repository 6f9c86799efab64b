//! Library surface of the CLI crate: configuration parsing and the run
//! pipeline, shared by the `ifef` binary and the acceptance suite.

pub mod config;
pub mod runner;
