//! Allocation-only core of the bibliographic reference matcher.
//!
//! Everything in this crate is pure: no clocks, no IO, no threads. Time is
//! passed in as seconds, stores and citation parsers are traits, and the
//! std companion crate (`refmatch`) supplies the HTTP-backed implementations.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backoff;
pub mod bucket;
pub mod matcher;
pub mod metrics;
pub mod model;
pub mod normalize;
pub mod score;
pub mod similarity;
pub mod store;
pub mod tier;

pub use backoff::{backoff_delay, ErrorClass, RetryPolicy};
pub use bucket::TokenBucket;
pub use matcher::{
    match_reference, merge_parsed_fields, run_cascade, CascadeResult, FailureKind, MatchOutcome,
    MatchStatus, MergeReport, ScoredCandidate,
};
pub use metrics::EvaluationCounts;
pub use model::{Candidate, CitationParser, Field, FieldSet, ParseSource, ParsedCitation, Reference};
pub use normalize::{is_blank, normalize_doi, normalize_surname, normalize_title};
pub use score::{accepts, score_candidate, validate_year, Fraction, MatchConfig, MatchScore, MAX_SCORE};
pub use similarity::{levenshtein, title_points, title_similarity, EmptyTitle};
pub use store::{CandidateSource, DoiLookup, MemoryStore, MissingField, StoreBuildError};
pub use tier::QueryTier;
