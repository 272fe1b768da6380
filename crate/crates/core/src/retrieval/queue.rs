//! Per-search FIFO of retrieved documents, refilled by a retrieval call
//! whenever it runs dry.

use std::collections::{BTreeSet, VecDeque};

use super::corpus::{CorpusIndex, Document};
use super::embed::Embedder;
use super::RetrievalError;

#[derive(Debug, Clone)]
pub struct DocumentQueue {
    pending: VecDeque<u32>,
    served: BTreeSet<u32>,
    batch_size: usize,
    filter: Option<String>,
    refills: usize,
}

impl DocumentQueue {
    pub fn new(batch_size: usize, filter: Option<String>) -> Self {
        Self {
            pending: VecDeque::new(),
            served: BTreeSet::new(),
            batch_size: batch_size.max(1),
            filter,
            refills: 0,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn served(&self) -> &BTreeSet<u32> {
        &self.served
    }

    pub fn pending(&self) -> impl Iterator<Item = u32> + '_ {
        self.pending.iter().copied()
    }

    /// Number of retrieval calls issued so far.
    pub fn refills(&self) -> usize {
        self.refills
    }

    /// Refills `pending` when it is empty. The query provider is only invoked
    /// when a refill actually happens.
    pub fn ensure_pending(
        &mut self,
        index: &CorpusIndex,
        embedder: &dyn Embedder,
        query_provider: &mut dyn FnMut() -> String,
    ) -> Result<(), RetrievalError> {
        if !self.pending.is_empty() {
            return Ok(());
        }
        let query = query_provider();
        self.refills += 1;
        let batch = index.retrieve(
            embedder,
            &query,
            self.batch_size,
            self.filter.as_deref(),
            &self.served,
        )?;
        if batch.is_empty() {
            return Err(RetrievalError::Exhausted);
        }
        self.pending.extend(batch.iter().map(|d| d.doc_id));
        Ok(())
    }

    /// Pops the head of the queue, retrieving a new batch first if needed.
    pub fn next<'a>(
        &mut self,
        index: &'a CorpusIndex,
        embedder: &dyn Embedder,
        query_provider: &mut dyn FnMut() -> String,
    ) -> Result<&'a Document, RetrievalError> {
        self.ensure_pending(index, embedder, query_provider)?;
        let id = self.pending.pop_front().expect("pending refilled above");
        self.take_served(index, id)
    }

    /// Removes a specific pending document and marks it served.
    pub fn take<'a>(&mut self, index: &'a CorpusIndex, doc_id: u32) -> Result<&'a Document, RetrievalError> {
        let pos = self
            .pending
            .iter()
            .position(|&d| d == doc_id)
            .ok_or_else(|| RetrievalError::InvalidArgument(format!("document {doc_id} is not pending")))?;
        self.pending.remove(pos);
        self.take_served(index, doc_id)
    }

    fn take_served<'a>(&mut self, index: &'a CorpusIndex, doc_id: u32) -> Result<&'a Document, RetrievalError> {
        self.served.insert(doc_id);
        index
            .document(doc_id)
            .ok_or_else(|| RetrievalError::InvalidArgument(format!("unknown document {doc_id}")))
    }
}
