//! The query cascade and the fallback passes around it.
//!
//! A reference is first matched with its own metadata. If no tier accepts a
//! candidate, the raw citation string (when there is one) goes through a
//! [`CitationParser`] and the extracted values fill the empty fields before a
//! second cascade. A year outside the plausible range gets one more cascade
//! with the year cleared.

use alloc::string::String;
use alloc::vec::Vec;

use log::{debug, info, warn};

use crate::model::{Candidate, CitationParser, Field, FieldSet, ParsedCitation, Reference};
use crate::normalize::{is_blank, normalize_doi};
use crate::score::{accepts, score_candidate, MatchConfig, MatchScore};
use crate::store::{CandidateSource, TierFilter};
use crate::tier::QueryTier;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    pub score: MatchScore,
    pub tier: QueryTier,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CascadeResult {
    /// Highest-scoring candidate seen. When `accepted`, the winner of the
    /// tier that stopped the cascade.
    pub best: Option<ScoredCandidate>,
    pub any_candidates: bool,
    pub accepted: bool,
    pub tiers_run: Vec<QueryTier>,
}

impl CascadeResult {
    pub fn best_total(&self) -> Option<u32> {
        self.best.as_ref().map(|b| b.score.total)
    }
}

/// Tiers the cascade would query for this reference, in order.
pub fn applicable_tiers(reference: &Reference, config: &MatchConfig) -> Vec<QueryTier> {
    QueryTier::ALL
        .into_iter()
        .filter(|t| config.use_doi || !t.uses_doi())
        .filter(|t| TierFilter::new(reference, *t).is_ok())
        .collect()
}

/// Candidates dated more than one year away from the reference are not
/// scored. Either year missing passes.
pub fn year_compatible(reference: &Reference, candidate: &Candidate) -> bool {
    match (reference.year, candidate.year) {
        (Some(a), Some(b)) => (i64::from(a) - i64::from(b)).abs() <= 1,
        _ => true,
    }
}

/// Runs tiers in order and stops at the first tier whose best candidate is
/// accepted.
pub fn run_cascade<S: CandidateSource + ?Sized>(
    reference: &Reference,
    store: &S,
    config: &MatchConfig,
) -> Result<CascadeResult, S::Error> {
    let mut result = CascadeResult::default();
    for tier in applicable_tiers(reference, config) {
        result.tiers_run.push(tier);
        let mut candidates = store.retrieve(reference, tier, config.candidate_limit)?;
        candidates.sort_by(|a, b| a.meta_id.cmp(&b.meta_id));
        candidates.retain(|c| year_compatible(reference, c));
        if candidates.is_empty() {
            continue;
        }
        result.any_candidates = true;

        let mut tier_best: Option<ScoredCandidate> = None;
        for candidate in candidates {
            let score = score_candidate(reference, &candidate);
            // Strictly greater keeps the smallest meta_id on ties.
            if tier_best.as_ref().map_or(true, |b| score.total > b.score.total) {
                tier_best = Some(ScoredCandidate { candidate, score, tier });
            }
        }
        let tier_best = tier_best.expect("non-empty candidate list");
        debug!(
            "ref {} tier {}: best {} = {}",
            reference.key, tier, tier_best.candidate.meta_id, tier_best.score.total
        );

        if accepts(&tier_best.score, config) {
            result.best = Some(tier_best);
            result.accepted = true;
            return Ok(result);
        }
        if result
            .best
            .as_ref()
            .map_or(true, |b| tier_best.score.total > b.score.total)
        {
            result.best = Some(tier_best);
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchStatus {
    Matched,
    PartialFailure,
    CompleteFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Partial,
    Complete,
}

impl FailureKind {
    pub fn label(self) -> &'static str {
        match self {
            FailureKind::Partial => "partial",
            FailureKind::Complete => "complete",
        }
    }
}

impl MatchStatus {
    pub fn failure_kind(self) -> Option<FailureKind> {
        match self {
            MatchStatus::Matched => None,
            MatchStatus::PartialFailure => Some(FailureKind::Partial),
            MatchStatus::CompleteFailure => Some(FailureKind::Complete),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOutcome {
    pub ref_key: String,
    pub status: MatchStatus,
    pub matched_meta_id: Option<String>,
    pub matched_doi: Option<String>,
    pub matched_title: Option<String>,
    pub score: Option<MatchScore>,
    pub query_tier: Option<QueryTier>,
    pub score_original: Option<u32>,
    pub score_after_grobid: Option<u32>,
    pub score_without_year: Option<u32>,
    pub grobid_attempted: bool,
    /// Fields filled by the citation parser.
    pub enriched_fields: FieldSet,
    /// The parser produced a year outside the plausible range.
    pub suspicious_parsed_year: bool,
}

impl MatchOutcome {
    fn unmatched(key: &str) -> Self {
        MatchOutcome {
            ref_key: String::from(key),
            status: MatchStatus::CompleteFailure,
            matched_meta_id: None,
            matched_doi: None,
            matched_title: None,
            score: None,
            query_tier: None,
            score_original: None,
            score_after_grobid: None,
            score_without_year: None,
            grobid_attempted: false,
            enriched_fields: FieldSet::empty(),
            suspicious_parsed_year: false,
        }
    }

    fn set_match(&mut self, hit: ScoredCandidate) {
        self.status = MatchStatus::Matched;
        self.matched_meta_id = Some(hit.candidate.meta_id);
        self.matched_doi = hit.candidate.doi;
        self.matched_title = hit.candidate.title;
        self.score = Some(hit.score);
        self.query_tier = Some(hit.tier);
    }

    pub fn is_matched(&self) -> bool {
        self.status == MatchStatus::Matched
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeReport {
    pub merged: FieldSet,
    pub suspicious_year: Option<i32>,
}

/// Copies parsed values into the reference's empty fields only.
pub fn merge_parsed_fields(
    reference: &Reference,
    parsed: &ParsedCitation,
    config: &MatchConfig,
) -> (Reference, MergeReport) {
    let mut merged = reference.clone();
    let mut report = MergeReport::default();

    if let Some(year) = parsed.year {
        if !config.year_is_plausible(year) {
            report.suspicious_year = Some(year);
        } else if merged.year.is_none() {
            merged.year = Some(year);
            report.merged.insert(Field::Year);
        }
    }

    let doi = parsed.doi.as_deref().map(normalize_doi);
    let texts = [
        (Field::FirstAuthorSurname, parsed.first_author_surname.as_deref()),
        (Field::ArticleTitle, parsed.article_title.as_deref()),
        (Field::JournalTitle, parsed.journal_title.as_deref()),
        (Field::Volume, parsed.volume.as_deref()),
        (Field::FirstPage, parsed.first_page.as_deref()),
        (Field::LastPage, parsed.last_page.as_deref()),
        (Field::Doi, doi.as_deref()),
    ];
    for (field, value) in texts {
        let Some(value) = value.filter(|v| !is_blank(v)) else {
            continue;
        };
        if merged.has(field) {
            continue;
        }
        if let Some(slot) = merged.text_slot(field) {
            *slot = Some(String::from(value.trim()));
            report.merged.insert(field);
        }
    }

    for field in report.merged.iter() {
        merged.enrichment_provenance.insert(field);
    }
    (merged, report)
}

/// Full matching procedure for one reference: original metadata, then
/// parser enrichment, then a year-cleared retry for implausible years.
///
/// Parser failures are logged and skip the enrichment pass; store failures
/// are returned.
pub fn match_reference<S, P>(
    reference: &Reference,
    store: &S,
    parser: Option<&P>,
    config: &MatchConfig,
) -> Result<MatchOutcome, S::Error>
where
    S: CandidateSource + ?Sized,
    P: CitationParser + ?Sized,
{
    let mut outcome = MatchOutcome::unmatched(&reference.key);

    let original = run_cascade(reference, store, config)?;
    outcome.score_original = original.best_total();
    let mut any_candidates = original.any_candidates;
    if original.accepted {
        outcome.set_match(original.best.expect("accepted cascade has a best candidate"));
        return Ok(outcome);
    }

    let mut current = reference.clone();
    let raw = reference.unstructured.as_deref().filter(|s| !is_blank(s));
    if let (Some(raw), Some(parser)) = (raw, parser) {
        match parser.parse_citation(raw) {
            Ok(parsed) => {
                outcome.grobid_attempted = true;
                let (enriched, report) = merge_parsed_fields(&current, &parsed, config);
                outcome.enriched_fields = report.merged;
                if let Some(year) = report.suspicious_year {
                    outcome.suspicious_parsed_year = true;
                    warn!("ref {}: parsed year {} is implausible, not merged", reference.key, year);
                }
                info!(
                    "ref {}: enrichment merged {} field(s): {:?}",
                    reference.key,
                    report.merged.len(),
                    report.merged.iter().map(Field::name).collect::<Vec<_>>()
                );
                if report.merged.is_empty() {
                    outcome.score_after_grobid = outcome.score_original;
                } else {
                    current = enriched;
                    let retry = run_cascade(&current, store, config)?;
                    outcome.score_after_grobid = retry.best_total();
                    any_candidates |= retry.any_candidates;
                    info!(
                        "ref {}: enriched retry best {:?}, accepted {}",
                        reference.key,
                        retry.best_total(),
                        retry.accepted
                    );
                    if retry.accepted {
                        outcome.set_match(retry.best.expect("accepted cascade has a best candidate"));
                        return Ok(outcome);
                    }
                }
            }
            Err(err) => {
                warn!("ref {}: citation parser unavailable, skipping enrichment: {}", reference.key, err);
            }
        }
    }

    if let Some(year) = current.year.filter(|y| !config.year_is_plausible(*y)) {
        info!("ref {}: retrying without implausible year {}", reference.key, year);
        let mut cleared = current.clone();
        cleared.year = None;
        let retry = run_cascade(&cleared, store, config)?;
        outcome.score_without_year = retry.best_total();
        any_candidates |= retry.any_candidates;
        if retry.accepted {
            outcome.set_match(retry.best.expect("accepted cascade has a best candidate"));
            return Ok(outcome);
        }
    }

    outcome.status = if any_candidates {
        MatchStatus::PartialFailure
    } else {
        MatchStatus::CompleteFailure
    };
    Ok(outcome)
}
