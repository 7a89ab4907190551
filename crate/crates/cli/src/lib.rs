//! Command-line front end for the entanglement-routing simulator.
//!
//! Responsibilities: turn flags and/or a `key = value` config file into a
//! validated [`ExperimentConfig`], run the requested schemes over the
//! requested topology, and write one reproducible CSV. All the science
//! lives in `entroute-core`; this crate is plumbing.

#![warn(missing_docs)]

pub mod config;
pub mod run;

pub use config::{parse_config, CliArgs, ExperimentConfig, SchemeSpec, TopologySpec};
pub use run::{build_topology, resolve_schemes, run_cli, RunReport, CSV_HEADER};
