//! Command-line front end and JSON API for the `omnigt` toolkit.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod server;

pub use args::Cli;
pub use commands::run;
pub use error::CliError;
