//! Command-line front end: configuration, report directories, manifests
//! and checkpoints around the `spikesurgery` library.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{execute, replay, resume, Invocation};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use manifest::{Command, Manifest, Options, Status};
