//! Tracker output and embedding ingestion, quality filtering, and split
//! construction.

mod embeddings;
mod filter;
mod records;
mod split;

use thiserror::Error;

use crate::model::SampleId;

pub use embeddings::{
    load_embedding_dir, load_embeddings, write_embeddings, write_stream_file, EmbeddingSet,
    StreamVectors, MAGIC,
};
pub use filter::filter_detections;
pub use records::{
    detection_to_line, format_polygon, parse_detection_line, parse_polygon, parse_tracks,
    Detection, PartBox, Quarter, Track,
};
pub use split::{build_split, foreground_fraction, parse_samples, SampleRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("frame {0} appears twice in its track")]
    DuplicateFrameInTrack(SampleId),
    #[error("polygon has zero area")]
    DegeneratePolygon,
    #[error("splits {first:?} and {second:?} overlap on camera {camera}")]
    OverlappingSplits {
        first: String,
        second: String,
        camera: u32,
    },
    #[error("stream {stream:?} expects dimension {expected}, found {found}")]
    DimensionMismatch {
        stream: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown stream {0:?}")]
    UnknownStream(String),
    #[error("embedding of {0} contains a non-finite value")]
    NonFiniteValue(SampleId),
    #[error("embedding of {0} is the zero vector")]
    ZeroVector(SampleId),
    #[error("stream {stream:?} has two embeddings for {sample}")]
    DuplicateEmbedding { stream: String, sample: SampleId },
    #[error("malformed embedding file: {0}")]
    MalformedEmbeddings(String),
}
