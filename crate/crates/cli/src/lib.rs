//! File formats, emitted documents, and the command-line front end for the
//! acsess sample-selection engine.

pub mod commands;
pub mod documents;
pub mod format;

pub use commands::{run_cli, CliError};
