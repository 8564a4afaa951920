//! File formats, the checkpoint container, run configuration and the
//! experiment pipeline around `tabfm-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use pipeline::{Outcome, Runner};
