//! Corpus ingestion, the persisted index, and exhaustive cosine retrieval.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::embed::{cosine, Embedder, HashedEmbedder};
use super::RetrievalError;

pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub source_id: String,
    #[serde(default)]
    pub filter_key: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: u32,
    pub text: String,
    pub source_id: String,
    pub filter_key: Option<String>,
    pub word_count: usize,
}

/// How chunks are embedded at ingestion time.
#[derive(Clone)]
pub enum EmbedderChoice {
    /// Hashed TF-IDF with IDF fitted on the ingested chunks.
    Hashed { dim: usize },
    External(Arc<dyn Embedder>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Hashed { idf: Vec<f64> },
    External { id: String, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub format_version: u32,
    pub embedder_id: String,
    pub dim: usize,
    pub chunk_words: usize,
    pub embedder: EmbedderSpec,
    pub documents: Vec<Document>,
    pub embeddings: Vec<Vec<f64>>,
}

/// Splits on whitespace into consecutive chunks of `chunk_words` words; the
/// last chunk may be shorter.
pub fn chunk_text(text: &str, chunk_words: usize) -> Vec<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    words.chunks(chunk_words.max(1)).map(|c| c.join(" ")).collect()
}

/// Reads every regular file under `dir` (sorted by relative path) as one
/// source record.
pub fn load_directory(
    dir: &Path,
    filter_key_fn: impl Fn(&str) -> Option<String>,
) -> Result<Vec<SourceRecord>, RetrievalError> {
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    files.sort();
    files
        .into_iter()
        .map(|path| {
            let text = fs::read_to_string(&path).map_err(|e| RetrievalError::io(&path, e))?;
            let source_id = path
                .strip_prefix(dir)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            Ok(SourceRecord {
                filter_key: filter_key_fn(&source_id),
                source_id,
                text,
            })
        })
        .collect()
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), RetrievalError> {
    let entries = fs::read_dir(dir).map_err(|e| RetrievalError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| RetrievalError::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if path.is_file() {
            out.push(path);
        }
    }
    Ok(())
}

/// Reads a newline-delimited record file with fields
/// `{source_id, filter_key, text}`.
pub fn load_records(path: &Path) -> Result<Vec<SourceRecord>, RetrievalError> {
    let raw = fs::read_to_string(path).map_err(|e| RetrievalError::io(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| RetrievalError::Malformed {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn ingest_corpus(
    records: &[SourceRecord],
    chunk_words: usize,
    embedder: EmbedderChoice,
) -> Result<CorpusIndex, RetrievalError> {
    if chunk_words < 1 {
        return Err(RetrievalError::InvalidArgument("chunk_words must be >= 1".into()));
    }
    let mut documents = Vec::new();
    for rec in records {
        for chunk in chunk_text(&rec.text, chunk_words) {
            let word_count = chunk.split_whitespace().count();
            documents.push(Document {
                doc_id: documents.len() as u32,
                text: chunk,
                source_id: rec.source_id.clone(),
                filter_key: rec.filter_key.clone(),
                word_count,
            });
        }
    }
    if documents.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let (spec, embedder): (EmbedderSpec, Arc<dyn Embedder>) = match embedder {
        EmbedderChoice::Hashed { dim } => {
            let hashed = HashedEmbedder::fit(dim, documents.iter().map(|d| d.text.as_str()));
            (EmbedderSpec::Hashed { idf: hashed.idf().to_vec() }, Arc::new(hashed))
        }
        EmbedderChoice::External(e) => (
            EmbedderSpec::External {
                id: e.id().to_string(),
                dim: e.dim(),
            },
            e,
        ),
    };
    let embeddings = documents
        .iter()
        .map(|d| embedder.embed(&d.text))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorpusIndex {
        format_version: INDEX_FORMAT_VERSION,
        embedder_id: embedder.id().to_string(),
        dim: embedder.dim(),
        chunk_words,
        embedder: spec,
        documents,
        embeddings,
    })
}

impl CorpusIndex {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn document(&self, doc_id: u32) -> Option<&Document> {
        self.documents.get(doc_id as usize)
    }

    /// The hashed embedder stored in the index, if it was built with one.
    pub fn hashed_embedder(&self) -> Option<HashedEmbedder> {
        match &self.embedder {
            EmbedderSpec::Hashed { idf } => Some(HashedEmbedder::from_idf(idf.clone())),
            EmbedderSpec::External { .. } => None,
        }
    }

    /// Resolves the embedder this index was built with. External embedders
    /// must be supplied and must carry a matching id.
    pub fn embedder(&self, external: Option<Arc<dyn Embedder>>) -> Result<Arc<dyn Embedder>, RetrievalError> {
        let embedder: Arc<dyn Embedder> = match (self.hashed_embedder(), external) {
            (Some(h), _) => Arc::new(h),
            (None, Some(e)) => e,
            (None, None) => {
                return Err(RetrievalError::EmbedderMismatch {
                    expected: self.embedder_id.clone(),
                    found: "<none>".into(),
                })
            }
        };
        if embedder.id() != self.embedder_id {
            return Err(RetrievalError::EmbedderMismatch {
                expected: self.embedder_id.clone(),
                found: embedder.id().to_string(),
            });
        }
        Ok(embedder)
    }

    /// Top-`k` documents by cosine similarity to `query_text`, restricted to
    /// `filter` and excluding `exclude`. Ties go to the lower doc id.
    pub fn retrieve(
        &self,
        embedder: &dyn Embedder,
        query_text: &str,
        k: usize,
        filter: Option<&str>,
        exclude: &BTreeSet<u32>,
    ) -> Result<Vec<&Document>, RetrievalError> {
        if k < 1 {
            return Err(RetrievalError::InvalidArgument("k must be >= 1".into()));
        }
        let q = embedder.embed(query_text)?;
        if q.len() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                found: q.len(),
            });
        }
        let mut scored: Vec<(f64, u32)> = self
            .documents
            .iter()
            .filter(|d| filter.is_none_or(|f| d.filter_key.as_deref() == Some(f)))
            .filter(|d| !exclude.contains(&d.doc_id))
            .map(|d| (cosine(&q, &self.embeddings[d.doc_id as usize]), d.doc_id))
            .collect();
        scored.sort_by(|a, b| match b.0.total_cmp(&a.0) {
            Ordering::Equal => a.1.cmp(&b.1),
            o => o,
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(_, id)| &self.documents[id as usize])
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let body = serde_json::to_string(self).map_err(|e| RetrievalError::InvalidArgument(e.to_string()))?;
        fs::write(path, body).map_err(|e| RetrievalError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let raw = fs::read_to_string(path).map_err(|e| RetrievalError::io(path, e))?;
        let index: Self = serde_json::from_str(&raw).map_err(|e| RetrievalError::Malformed {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if index.format_version != INDEX_FORMAT_VERSION {
            return Err(RetrievalError::InvalidArgument(format!(
                "unsupported index format version {}",
                index.format_version
            )));
        }
        if index.embeddings.len() != index.documents.len()
            || index.embeddings.iter().any(|e| e.len() != index.dim)
        {
            return Err(RetrievalError::InvalidArgument(
                "index embeddings do not match documents/dimension".into(),
            ));
        }
        Ok(index)
    }
}
