//! Candidate retrieval contract and the in-memory fixture backend.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::convert::Infallible;
use core::fmt;

use crate::model::{Candidate, Field, Reference};
use crate::normalize::{normalize_doi, normalize_surname, normalize_title};
use crate::tier::QueryTier;

/// The probe lacks a field the tier filters on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MissingField {
    pub tier: QueryTier,
    pub field: Field,
}

impl fmt::Display for MissingField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} requires a non-empty {}", self.tier, self.field)
    }
}

impl core::error::Error for MissingField {}

/// A bibliographic knowledge base that can be queried tier by tier.
pub trait CandidateSource {
    type Error: fmt::Display;

    /// Up to `limit` records agreeing with the probe on every mandatory field
    /// of `tier`, ordered by `meta_id`. Years match within one year either way.
    fn retrieve(
        &self,
        probe: &Reference,
        tier: QueryTier,
        limit: usize,
    ) -> Result<Vec<Candidate>, Self::Error>;
}

/// DOI existence check.
pub trait DoiLookup {
    type Error: fmt::Display;

    /// `doi` must already be normalized.
    fn lookup_doi(&self, doi: &str) -> Result<Option<Candidate>, Self::Error>;
}

impl<S: CandidateSource + ?Sized> CandidateSource for &S {
    type Error = S::Error;

    fn retrieve(&self, probe: &Reference, tier: QueryTier, limit: usize) -> Result<Vec<Candidate>, S::Error> {
        (**self).retrieve(probe, tier, limit)
    }
}

impl<S: DoiLookup + ?Sized> DoiLookup for &S {
    type Error = S::Error;

    fn lookup_doi(&self, doi: &str) -> Result<Option<Candidate>, S::Error> {
        (**self).lookup_doi(doi)
    }
}

/// Normalized probe values a tier filters on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TierFilter {
    pub tier: QueryTier,
    pub years: Option<[i32; 3]>,
    pub doi: Option<String>,
    pub title: Option<String>,
    pub surname: Option<String>,
    pub volume: Option<String>,
    pub first_page: Option<String>,
}

impl TierFilter {
    pub fn new(probe: &Reference, tier: QueryTier) -> Result<Self, MissingField> {
        if let Some(field) = tier.missing_field(probe) {
            return Err(MissingField { tier, field });
        }
        let text = |field: Field| probe.text(field).map(str::trim).map(String::from);
        let mut filter = TierFilter {
            tier,
            years: None,
            doi: None,
            title: None,
            surname: None,
            volume: None,
            first_page: None,
        };
        for field in tier.mandatory_fields() {
            match field {
                Field::Year => {
                    let y = probe.year.expect("checked by missing_field");
                    filter.years = Some([y.saturating_sub(1), y, y.saturating_add(1)]);
                }
                Field::Doi => filter.doi = text(Field::Doi).map(|d| normalize_doi(&d)),
                Field::ArticleTitle => {
                    filter.title = text(Field::ArticleTitle).map(|t| normalize_title(&t))
                }
                Field::FirstAuthorSurname => {
                    filter.surname = text(Field::FirstAuthorSurname).map(|s| normalize_surname(&s))
                }
                Field::Volume => filter.volume = text(Field::Volume),
                Field::FirstPage => filter.first_page = text(Field::FirstPage),
                _ => {}
            }
        }
        // Normalization can empty a value that was non-blank (pure punctuation).
        for (value, field) in [
            (&filter.doi, Field::Doi),
            (&filter.title, Field::ArticleTitle),
            (&filter.surname, Field::FirstAuthorSurname),
        ] {
            if value.as_deref() == Some("") {
                return Err(MissingField { tier, field });
            }
        }
        Ok(filter)
    }

    /// Whether a stored record passes every mandatory-field check.
    pub fn admits(&self, candidate: &Candidate) -> bool {
        if let Some(years) = self.years {
            if !candidate.year.is_some_and(|y| years.contains(&y)) {
                return false;
            }
        }
        let agree = |want: &Option<String>, have: Option<String>| match want {
            None => true,
            Some(w) => have.as_deref() == Some(w.as_str()),
        };
        agree(&self.doi, candidate.doi.as_deref().map(normalize_doi))
            && agree(&self.title, candidate.title.as_deref().map(normalize_title))
            && agree(
                &self.surname,
                candidate.first_author_surname.as_deref().map(normalize_surname),
            )
            && agree(&self.volume, candidate.volume.as_deref().map(|v| String::from(v.trim())))
            && agree(
                &self.first_page,
                candidate.first_page.as_deref().map(|p| String::from(p.trim())),
            )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreBuildError {
    EmptyMetaId,
    DuplicateMetaId(String),
}

impl fmt::Display for StoreBuildError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreBuildError::EmptyMetaId => f.write_str("record with empty meta_id"),
            StoreBuildError::DuplicateMetaId(id) => write!(f, "duplicate meta_id {id}"),
        }
    }
}

impl core::error::Error for StoreBuildError {}

/// Immutable in-memory store indexed for every tier.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    records: Vec<Candidate>,
    by_doi: BTreeMap<String, Vec<usize>>,
    by_surname: BTreeMap<String, Vec<usize>>,
    by_volume_page: BTreeMap<(String, String), Vec<usize>>,
}

impl MemoryStore {
    pub fn from_records(records: impl IntoIterator<Item = Candidate>) -> Result<Self, StoreBuildError> {
        let mut records: Vec<Candidate> = records.into_iter().map(Candidate::sanitized).collect();
        records.sort_by(|a, b| a.meta_id.cmp(&b.meta_id));
        for pair in records.windows(2) {
            if pair[0].meta_id == pair[1].meta_id {
                return Err(StoreBuildError::DuplicateMetaId(pair[0].meta_id.clone()));
            }
        }
        let mut store = MemoryStore::default();
        for (i, record) in records.iter().enumerate() {
            if record.meta_id.trim().is_empty() {
                return Err(StoreBuildError::EmptyMetaId);
            }
            if let Some(doi) = &record.doi {
                store.by_doi.entry(doi.clone()).or_default().push(i);
            }
            if let Some(s) = record.first_author_surname.as_deref().map(normalize_surname) {
                if !s.is_empty() {
                    store.by_surname.entry(s).or_default().push(i);
                }
            }
            if let (Some(v), Some(p)) = (&record.volume, &record.first_page) {
                let key = (String::from(v.trim()), String::from(p.trim()));
                store.by_volume_page.entry(key).or_default().push(i);
            }
        }
        store.records = records;
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Candidate] {
        &self.records
    }

    fn bucket(&self, filter: &TierFilter) -> &[usize] {
        let hit = match filter.tier {
            QueryTier::YearDoi | QueryTier::DoiTitle => {
                filter.doi.as_ref().and_then(|d| self.by_doi.get(d))
            }
            QueryTier::AuthorTitle | QueryTier::YearAuthorPage | QueryTier::YearAuthorVolume => {
                filter.surname.as_ref().and_then(|s| self.by_surname.get(s))
            }
            QueryTier::YearVolumePage => match (&filter.volume, &filter.first_page) {
                (Some(v), Some(p)) => self.by_volume_page.get(&(v.clone(), p.clone())),
                _ => None,
            },
        };
        hit.map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn query(
        &self,
        probe: &Reference,
        tier: QueryTier,
        limit: usize,
    ) -> Result<Vec<Candidate>, MissingField> {
        let filter = TierFilter::new(probe, tier)?;
        Ok(self
            .bucket(&filter)
            .iter()
            .map(|&i| &self.records[i])
            .filter(|c| filter.admits(c))
            .take(limit)
            .cloned()
            .collect())
    }

    pub fn get_by_doi(&self, doi: &str) -> Option<&Candidate> {
        self.by_doi
            .get(doi)
            .and_then(|ids| ids.first())
            .map(|&i| &self.records[i])
    }
}

impl CandidateSource for MemoryStore {
    type Error = MissingField;

    fn retrieve(&self, probe: &Reference, tier: QueryTier, limit: usize) -> Result<Vec<Candidate>, MissingField> {
        self.query(probe, tier, limit)
    }
}

impl DoiLookup for MemoryStore {
    type Error = Infallible;

    fn lookup_doi(&self, doi: &str) -> Result<Option<Candidate>, Infallible> {
        debug_assert_eq!(doi, normalize_doi(doi), "lookup_doi expects a normalized DOI");
        Ok(self.get_by_doi(doi).cloned())
    }
}
