//! Orchestration, file formats and the command-line front end for the
//! `partopt-core` threshold engine.

pub mod config_file;
pub mod empirical;
pub mod golden;
pub mod pipeline;
pub mod report;

pub use partopt_core as core;
