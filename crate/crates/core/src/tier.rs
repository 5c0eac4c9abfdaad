//! The six query tiers, in cascade order.

use core::fmt;

use crate::model::{Field, Reference};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueryTier {
    YearDoi,
    DoiTitle,
    AuthorTitle,
    YearAuthorPage,
    YearVolumePage,
    YearAuthorVolume,
}

impl QueryTier {
    /// Cascade order.
    pub const ALL: [QueryTier; 6] = [
        QueryTier::YearDoi,
        QueryTier::DoiTitle,
        QueryTier::AuthorTitle,
        QueryTier::YearAuthorPage,
        QueryTier::YearVolumePage,
        QueryTier::YearAuthorVolume,
    ];

    pub fn label(self) -> &'static str {
        match self {
            QueryTier::YearDoi => "Q1-YEAR&DOI",
            QueryTier::DoiTitle => "Q2-DOI&TITLE",
            QueryTier::AuthorTitle => "Q3-AUTH&TITLE",
            QueryTier::YearAuthorPage => "Q4-YEAR&AUTH&PAGE",
            QueryTier::YearVolumePage => "Q5-YEAR&VOL&PAGE",
            QueryTier::YearAuthorVolume => "Q6-YEAR&AUTH&VOL",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.label() == label)
    }

    /// 1-based position in the cascade.
    pub fn ordinal(self) -> usize {
        self as usize + 1
    }

    pub fn mandatory_fields(self) -> &'static [Field] {
        match self {
            QueryTier::YearDoi => &[Field::Year, Field::Doi],
            QueryTier::DoiTitle => &[Field::Doi, Field::ArticleTitle],
            QueryTier::AuthorTitle => &[Field::FirstAuthorSurname, Field::ArticleTitle],
            QueryTier::YearAuthorPage => &[Field::Year, Field::FirstAuthorSurname, Field::FirstPage],
            QueryTier::YearVolumePage => &[Field::Year, Field::Volume, Field::FirstPage],
            QueryTier::YearAuthorVolume => &[Field::Year, Field::FirstAuthorSurname, Field::Volume],
        }
    }

    pub fn uses_doi(self) -> bool {
        self.mandatory_fields().contains(&Field::Doi)
    }

    pub fn uses(self, field: Field) -> bool {
        self.mandatory_fields().contains(&field)
    }

    /// First mandatory field the reference lacks, if any.
    pub fn missing_field(self, reference: &Reference) -> Option<Field> {
        self.mandatory_fields()
            .iter()
            .copied()
            .find(|f| !reference.has(*f))
    }
}

impl fmt::Display for QueryTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}
