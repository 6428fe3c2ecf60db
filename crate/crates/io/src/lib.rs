//! File formats, configuration and the `cbc` command-line interface for
//! [`cbc_core`].

pub mod blobs;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod idx;
pub mod model_file;
pub mod pgm;
pub mod report;

pub use error::{IoError, Result};

/// `cbc-io <version>`, embedded in reports and model files.
pub fn library_version() -> String {
    format!("cbc-io {}", env!("CARGO_PKG_VERSION"))
}
