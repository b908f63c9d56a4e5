//! Configuration, CSV artifacts and subcommands of the `ladderfp` tool.

pub mod commands;
pub mod config;
pub mod csvout;
pub mod error;
pub mod manifest;
pub mod session;

pub use commands::{run, Command};
pub use config::{parse_config, RunConfig};
pub use error::{CliError, CliResult};
pub use session::Session;
