//! Front end of the `necklab` binary: configuration, subcommands, CSV and
//! JSON output, and the pinned regression constants.

pub mod app;
pub mod commands;
pub mod config;
pub mod output;
pub mod regression;
