//! Command-line front end: argument parsing, CSV ingestion and output.

pub mod args;
pub mod emit;
pub mod error;
pub mod ingest;
pub mod run;

pub use args::{parse_args, ParseFailure, RunConfig};
pub use error::{CliError, IngestError};
