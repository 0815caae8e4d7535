//! Command-line front end for individualized treatment rule estimation:
//! cohort CSV ingestion, model/rule serialization, report rendering, and the
//! subcommand pipeline built on `itr-core`.

pub mod cli;
pub mod codec;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod report;
pub mod tablecsv;
