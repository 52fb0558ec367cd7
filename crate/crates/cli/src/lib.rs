//! Command line verbs and the HTTP session server.

pub mod commands;
pub mod server;

pub use commands::{run, Cli, CliError, Command};
