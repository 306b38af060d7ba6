use std::path::PathBuf;

use thiserror::Error;

use crate::{eval::EvalError, fusion::FusionError, gallery::GalleryError, geometry::GeometryError};
use crate::{ingest::IngestError, stats::StatsError, synth::SynthError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse identifier {0:?}")]
pub struct ParseIdError(pub String);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("stream {0:?} is declared more than once")]
    DuplicateStream(String),
    #[error("stream {0:?} has zero embedding dimension")]
    ZeroDimension(String),
    #[error("stream name must be nonempty")]
    EmptyStreamName,
    #[error("unknown stream {0:?}")]
    UnknownStream(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Umbrella error for the pipeline, the CLI, and the service.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Gallery(#[from] GalleryError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    ParseId(#[from] ParseIdError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Self::Json {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
