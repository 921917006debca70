use std::path::PathBuf;

use mutqual_core::grouping::GroupError;
use mutqual_core::quality::QualityError;
use mutqual_core::selection::{CanonError, SelectionError};
use mutqual_core::synth::SynthError;
use thiserror::Error;

use crate::ingest::IngestError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Ingest {
        path: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Canon(#[from] CanonError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {detail}")]
    BadFile { path: PathBuf, detail: String },
    #[error("no quality records to report on")]
    EmptyInput,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn bad_file(path: impl Into<PathBuf>, detail: impl ToString) -> Error {
        Error::BadFile {
            path: path.into(),
            detail: detail.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
