//! The two store backends behind one type.

use refmatch_core::{Candidate, CandidateSource, DoiLookup, MemoryStore, MissingField, QueryTier, Reference};
use thiserror::Error;

use crate::netguard::NetError;
use crate::sparql::{SparqlError, SparqlStore};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    MissingField(#[from] MissingField),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("malformed store response: {0}")]
    Malformed(String),
}

impl From<SparqlError> for StoreError {
    fn from(e: SparqlError) -> Self {
        match e {
            SparqlError::Net(n) => StoreError::Net(n),
            SparqlError::MissingField(m) => StoreError::MissingField(m),
            other => StoreError::Malformed(other.to_string()),
        }
    }
}

impl StoreError {
    /// Transport-level failure, as opposed to a bad probe or response.
    pub fn is_server_error(&self) -> bool {
        matches!(self, StoreError::Net(NetError::ServerError { .. }))
    }
}

#[derive(Debug, Clone)]
pub enum AnyStore {
    Memory(MemoryStore),
    Sparql(SparqlStore),
}

impl CandidateSource for AnyStore {
    type Error = StoreError;

    fn retrieve(&self, probe: &Reference, tier: QueryTier, limit: usize) -> Result<Vec<Candidate>, StoreError> {
        match self {
            AnyStore::Memory(m) => Ok(m.retrieve(probe, tier, limit)?),
            AnyStore::Sparql(s) => Ok(s.retrieve(probe, tier, limit)?),
        }
    }
}

impl DoiLookup for AnyStore {
    type Error = StoreError;

    fn lookup_doi(&self, doi: &str) -> Result<Option<Candidate>, StoreError> {
        match self {
            AnyStore::Memory(m) => Ok(m.get_by_doi(doi).cloned()),
            AnyStore::Sparql(s) => Ok(s.lookup_doi(doi)?),
        }
    }
}
