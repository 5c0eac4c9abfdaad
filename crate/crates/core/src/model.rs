//! Domain records shared by every stage of the matcher.

use alloc::string::String;
use core::fmt;

use crate::normalize::{is_blank, normalize_doi};

/// A metadata field of a [`Reference`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    Year,
    Volume,
    FirstPage,
    LastPage,
    FirstAuthorSurname,
    ArticleTitle,
    VolumeTitle,
    JournalTitle,
    Doi,
    Unstructured,
}

impl Field {
    pub const ALL: [Field; 10] = [
        Field::Year,
        Field::Volume,
        Field::FirstPage,
        Field::LastPage,
        Field::FirstAuthorSurname,
        Field::ArticleTitle,
        Field::VolumeTitle,
        Field::JournalTitle,
        Field::Doi,
        Field::Unstructured,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Year => "year",
            Field::Volume => "volume",
            Field::FirstPage => "first_page",
            Field::LastPage => "last_page",
            Field::FirstAuthorSurname => "first_author_surname",
            Field::ArticleTitle => "article_title",
            Field::VolumeTitle => "volume_title",
            Field::JournalTitle => "journal_title",
            Field::Doi => "doi",
            Field::Unstructured => "unstructured",
        }
    }

    fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Small set of [`Field`]s, used to record which values came from the
/// citation parser rather than the source record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct FieldSet(u16);

impl FieldSet {
    pub const fn empty() -> Self {
        FieldSet(0)
    }

    pub fn insert(&mut self, field: Field) {
        self.0 |= field.bit();
    }

    pub fn contains(self, field: Field) -> bool {
        self.0 & field.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Field> {
        Field::ALL.into_iter().filter(move |f| self.contains(*f))
    }
}

impl FromIterator<Field> for FieldSet {
    fn from_iter<I: IntoIterator<Item = Field>>(iter: I) -> Self {
        let mut set = FieldSet::empty();
        for field in iter {
            set.insert(field);
        }
        set
    }
}

/// One cited work as described by the citing source.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Reference {
    pub key: String,
    pub year: Option<i32>,
    pub volume: Option<String>,
    pub first_page: Option<String>,
    pub last_page: Option<String>,
    pub first_author_surname: Option<String>,
    pub article_title: Option<String>,
    pub volume_title: Option<String>,
    pub journal_title: Option<String>,
    pub doi: Option<String>,
    pub unstructured: Option<String>,
    pub enrichment_provenance: FieldSet,
}

impl Reference {
    pub fn new(key: impl Into<String>) -> Self {
        Reference {
            key: key.into(),
            ..Reference::default()
        }
    }

    /// Whether the field holds a usable value. Blank strings count as empty.
    pub fn has(&self, field: Field) -> bool {
        match field {
            Field::Year => self.year.is_some(),
            _ => self.text(field).is_some_and(|s| !is_blank(s)),
        }
    }

    pub fn text(&self, field: Field) -> Option<&str> {
        match field {
            Field::Year => None,
            Field::Volume => self.volume.as_deref(),
            Field::FirstPage => self.first_page.as_deref(),
            Field::LastPage => self.last_page.as_deref(),
            Field::FirstAuthorSurname => self.first_author_surname.as_deref(),
            Field::ArticleTitle => self.article_title.as_deref(),
            Field::VolumeTitle => self.volume_title.as_deref(),
            Field::JournalTitle => self.journal_title.as_deref(),
            Field::Doi => self.doi.as_deref(),
            Field::Unstructured => self.unstructured.as_deref(),
        }
    }

    pub(crate) fn text_slot(&mut self, field: Field) -> Option<&mut Option<String>> {
        Some(match field {
            Field::Year => return None,
            Field::Volume => &mut self.volume,
            Field::FirstPage => &mut self.first_page,
            Field::LastPage => &mut self.last_page,
            Field::FirstAuthorSurname => &mut self.first_author_surname,
            Field::ArticleTitle => &mut self.article_title,
            Field::VolumeTitle => &mut self.volume_title,
            Field::JournalTitle => &mut self.journal_title,
            Field::Doi => &mut self.doi,
            Field::Unstructured => &mut self.unstructured,
        })
    }

    /// True when at least one field other than the key carries a value.
    pub fn has_any_metadata(&self) -> bool {
        Field::ALL.iter().any(|f| self.has(*f))
    }

    /// Drops blank strings and normalizes the DOI in place.
    pub fn sanitize(&mut self) {
        for field in Field::ALL {
            if let Some(slot) = self.text_slot(field) {
                if slot.as_deref().is_some_and(is_blank) {
                    *slot = None;
                }
            }
        }
        if let Some(doi) = self.doi.as_deref() {
            self.doi = Some(normalize_doi(doi)).filter(|d| !d.is_empty());
        }
    }

    /// Best available title for display: article, then volume, then journal.
    pub fn display_title(&self) -> Option<&str> {
        [Field::ArticleTitle, Field::VolumeTitle, Field::JournalTitle]
            .into_iter()
            .find(|f| self.has(*f))
            .and_then(|f| self.text(f))
    }
}

/// A record held by the bibliographic store.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Candidate {
    pub meta_id: String,
    pub doi: Option<String>,
    pub title: Option<String>,
    pub first_author_surname: Option<String>,
    pub year: Option<i32>,
    pub volume: Option<String>,
    pub first_page: Option<String>,
    pub last_page: Option<String>,
}

impl Candidate {
    pub fn new(meta_id: impl Into<String>) -> Self {
        Candidate {
            meta_id: meta_id.into(),
            ..Candidate::default()
        }
    }

    /// Drops blank strings and normalizes the DOI in place.
    pub fn sanitize(&mut self) {
        for slot in [
            &mut self.doi,
            &mut self.title,
            &mut self.first_author_surname,
            &mut self.volume,
            &mut self.first_page,
            &mut self.last_page,
        ] {
            if slot.as_deref().is_some_and(is_blank) {
                *slot = None;
            }
        }
        if let Some(doi) = self.doi.as_deref() {
            self.doi = Some(normalize_doi(doi)).filter(|d| !d.is_empty());
        }
    }

    pub fn sanitized(mut self) -> Self {
        self.sanitize();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseSource {
    ExternalService,
    #[default]
    Stub,
}

/// Structured fields extracted from a raw citation string.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedCitation {
    pub year: Option<i32>,
    pub first_author_surname: Option<String>,
    pub article_title: Option<String>,
    pub journal_title: Option<String>,
    pub volume: Option<String>,
    pub first_page: Option<String>,
    pub last_page: Option<String>,
    pub doi: Option<String>,
    pub source: ParseSource,
}

/// Turns a raw citation string into structured fields.
pub trait CitationParser {
    type Error: fmt::Display;

    fn parse_citation(&self, raw: &str) -> Result<ParsedCitation, Self::Error>;
}

impl<P: CitationParser + ?Sized> CitationParser for &P {
    type Error = P::Error;

    fn parse_citation(&self, raw: &str) -> Result<ParsedCitation, Self::Error> {
        (**self).parse_citation(raw)
    }
}
