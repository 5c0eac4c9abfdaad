//! Citation-string parsers: a GROBID HTTP client and an offline regex stub.

use std::sync::Arc;
use std::sync::OnceLock;

use refmatch_core::{normalize_doi, validate_year, CitationParser, ParseSource, ParsedCitation, Reference};
use regex::Regex;
use thiserror::Error;

use crate::ingest::parse_tei_fragment;
use crate::netguard::{HttpRequest, NetError, NetGuard};

pub const PROCESS_CITATION_PATH: &str = "api/processCitation";

#[derive(Debug, Error)]
pub enum ParserError {
    #[error("empty citation string")]
    EmptyInput,
    #[error("citation parser unavailable: {0}")]
    Unavailable(#[from] NetError),
    #[error("unreadable parser response: {0}")]
    Unparseable(String),
}

fn from_reference(r: Reference, source: ParseSource, current_year: i32) -> ParsedCitation {
    ParsedCitation {
        year: r.year.filter(|y| validate_year(*y, current_year)),
        first_author_surname: r.first_author_surname,
        article_title: r.article_title,
        journal_title: r.journal_title.or(r.volume_title),
        volume: r.volume,
        first_page: r.first_page,
        last_page: r.last_page,
        doi: r.doi.map(|d| normalize_doi(&d)).filter(|d| !d.is_empty()),
        source,
    }
}

/// Client for GROBID's `processCitation` service.
#[derive(Debug, Clone)]
pub struct GrobidParser {
    url: String,
    guard: Arc<NetGuard>,
    consolidate: bool,
    current_year: i32,
}

impl GrobidParser {
    /// `base` is the service root, e.g. `http://localhost:8070`.
    pub fn new(base: &str, guard: Arc<NetGuard>, current_year: i32) -> Self {
        GrobidParser {
            url: format!("{}/{PROCESS_CITATION_PATH}", base.trim_end_matches('/')),
            guard,
            consolidate: false,
            current_year,
        }
    }

    pub fn with_consolidation(mut self, on: bool) -> Self {
        self.consolidate = on;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl CitationParser for GrobidParser {
    type Error = ParserError;

    fn parse_citation(&self, raw: &str) -> Result<ParsedCitation, ParserError> {
        if raw.trim().is_empty() {
            return Err(ParserError::EmptyInput);
        }
        let consolidate = if self.consolidate { "1" } else { "0" };
        let request = HttpRequest::post_form(
            self.url.as_str(),
            &[("citations", raw), ("consolidateCitations", consolidate)],
        )
        .header("Accept", "application/xml");
        let response = self.guard.execute(&request)?;
        if response.status == 204 {
            return Ok(ParsedCitation {
                source: ParseSource::ExternalService,
                ..ParsedCitation::default()
            });
        }
        let text = String::from_utf8(response.body).map_err(|e| ParserError::Unparseable(e.to_string()))?;
        let parsed = parse_tei_fragment(&text).map_err(|e| ParserError::Unparseable(e.to_string()))?;
        Ok(match parsed {
            Some(r) => from_reference(r, ParseSource::ExternalService, self.current_year),
            None => ParsedCitation {
                source: ParseSource::ExternalService,
                ..ParsedCitation::default()
            },
        })
    }
}

struct Patterns {
    year: Regex,
    author: Regex,
    quoted: Regex,
    numbers: Regex,
    doi: Regex,
}

fn patterns() -> &'static Patterns {
    static CELL: OnceLock<Patterns> = OnceLock::new();
    CELL.get_or_init(|| Patterns {
        year: Regex::new(r"\((\d{4})[a-z]?\)").unwrap(),
        author: Regex::new(r"^\s*([\p{L}][\p{L}'’\- ]*?),\s*\p{Lu}\.").unwrap(),
        quoted: Regex::new(r#"["“]([^"”]+)["”]"#).unwrap(),
        numbers: Regex::new(r"(\d+)\s*(?:\(([^)]*)\))?\s*[,:]\s*(?:pp?\.\s*)?([A-Za-z]?\d+)(?:\s*[-–—]+\s*([A-Za-z]?\d+))?").unwrap(),
        doi: Regex::new(r"(?i)\b(10\.\d{4,9}/[^\s<>]+)").unwrap(),
    })
}

fn tidy(s: &str) -> Option<String> {
    let t = s
        .trim()
        .trim_matches(|c: char| c == ',' || c == '.' || c == ';' || c == ':' || c.is_whitespace());
    let t = t.split_whitespace().collect::<Vec<_>>().join(" ");
    (!t.is_empty()).then_some(t)
}

/// Deterministic regex parser for offline runs and tests. Lower fidelity
/// than the external service; it understands author-year citations of the
/// form `Surname, I. (YYYY). Title. Journal, V(I), p-p.`
#[derive(Debug, Clone)]
pub struct StubParser {
    current_year: i32,
}

impl StubParser {
    pub fn new(current_year: i32) -> Self {
        StubParser { current_year }
    }

    pub fn parse(&self, raw: &str) -> ParsedCitation {
        let p = patterns();
        let mut out = ParsedCitation {
            source: ParseSource::Stub,
            ..ParsedCitation::default()
        };
        let text = raw.split_whitespace().collect::<Vec<_>>().join(" ");

        let mut rest = text.as_str();
        if let Some(m) = p.doi.find(&text) {
            let doi = m.as_str().trim_end_matches(['.', ',', ';', ')', ']']);
            out.doi = Some(normalize_doi(doi)).filter(|d| !d.is_empty());
            rest = &text[..m.start()];
            rest = rest.trim_end().trim_end_matches("doi:").trim_end_matches("DOI:");
        }

        if let Some(c) = p.author.captures(rest) {
            out.first_author_surname = tidy(&c[1]);
        }

        let after_year = match p.year.captures(rest) {
            Some(c) => {
                let y: i32 = c[1].parse().expect("four digits");
                out.year = validate_year(y, self.current_year).then_some(y);
                &rest[c.get(0).unwrap().end()..]
            }
            None => "",
        };

        let (title, tail) = if let Some(c) = p.quoted.captures(rest) {
            let whole = c.get(0).unwrap();
            (tidy(&c[1]), &rest[whole.end()..])
        } else if !after_year.is_empty() {
            let body = after_year.trim_start_matches(['.', ' ']);
            match body.find(". ") {
                Some(i) => (tidy(&body[..i]), &body[i + 2..]),
                None => (tidy(body), ""),
            }
        } else {
            (None, "")
        };
        out.article_title = title;

        if let Some(c) = p.numbers.captures(tail) {
            let start = c.get(0).unwrap().start();
            out.journal_title = tidy(&tail[..start]);
            out.volume = tidy(&c[1]);
            out.first_page = tidy(&c[3]);
            out.last_page = c.get(4).and_then(|m| tidy(m.as_str()));
        } else {
            out.journal_title = tidy(tail);
        }
        out
    }
}

impl CitationParser for StubParser {
    type Error = ParserError;

    fn parse_citation(&self, raw: &str) -> Result<ParsedCitation, ParserError> {
        if raw.trim().is_empty() {
            return Err(ParserError::EmptyInput);
        }
        Ok(self.parse(raw))
    }
}

/// Whichever parser the run was configured with.
#[derive(Debug, Clone)]
pub enum AnyParser {
    Grobid(GrobidParser),
    Stub(StubParser),
}

impl CitationParser for AnyParser {
    type Error = ParserError;

    fn parse_citation(&self, raw: &str) -> Result<ParsedCitation, ParserError> {
        match self {
            AnyParser::Grobid(g) => g.parse_citation(raw),
            AnyParser::Stub(s) => s.parse_citation(raw),
        }
    }
}
