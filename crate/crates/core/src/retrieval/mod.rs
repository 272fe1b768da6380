//! Corpus chunking, embedding-based top-k retrieval and the per-search
//! document queue.

mod corpus;
mod embed;
mod queue;

use std::path::Path;

use thiserror::Error;

pub use corpus::{
    chunk_text, ingest_corpus, load_directory, load_records, CorpusIndex, Document, EmbedderChoice, EmbedderSpec,
    SourceRecord, INDEX_FORMAT_VERSION,
};
pub use embed::{bucket, cosine, fnv1a, l2_normalize, tokenize, Embedder, HashedEmbedder, RemoteEmbedder, DEFAULT_DIM};
pub use queue::DocumentQueue;

use crate::transport::TransportError;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("corpus contains no text")]
    EmptyCorpus,
    #[error("no unserved documents left to retrieve")]
    Exhausted,
    #[error("embedder mismatch: index built with `{expected}`, got `{found}`")]
    EmbedderMismatch { expected: String, found: String },
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

impl RetrievalError {
    pub fn is_transport(&self) -> bool {
        matches!(self, Self::Transport(_))
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
