//! Reference matching against a bibliographic knowledge base.
//!
//! The pure matching logic lives in [`refmatch_core`]; this crate adds the
//! parts that touch the outside world: Crossref and TEI ingest, the SPARQL
//! store adapter, the citation-parsing service client, the rate-limited HTTP
//! executor, directory-scale batch runs with checkpointing, report files and
//! the evaluation harness.

pub mod batch;
pub mod checkpoint;
pub mod cli;
pub mod clock;
pub mod evaluate;
pub mod fixture;
pub mod fsutil;
pub mod ingest;
pub mod netguard;
pub mod parser;
pub mod report;
pub mod sparql;
pub mod store;

pub use refmatch_core as core;
