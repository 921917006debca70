//! File formats, parallel pipeline, figures and the `mutqual` command line
//! on top of [`mutqual_core`].

pub mod cli;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod table;

pub use error::{Error, Result};
