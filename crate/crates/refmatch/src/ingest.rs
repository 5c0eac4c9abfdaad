//! Reference lists from Crossref works JSON and TEI-XML `biblStruct`s.

use std::path::Path;
use std::str::FromStr;

use refmatch_core::normalize::collapse_whitespace;
use refmatch_core::{normalize_doi, Reference};
use roxmltree::{Document, Node};
use serde_json::Value;
use thiserror::Error;

use crate::netguard::{HttpRequest, NetError, NetGuard};

pub const DEFAULT_CROSSREF_BASE: &str = "https://api.crossref.org/works/";

const XML_NS: &str = "http://www.w3.org/XML/1998/namespace";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("DOI not found: {0}")]
    NotFound(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid URL: {0}")]
    Url(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A citing work and its reference list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CitingWork {
    pub source_path: String,
    pub citing_doi: Option<String>,
    pub references: Vec<Reference>,
    pub reference_count_declared: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputFormat {
    Crossref,
    Tei,
    #[default]
    Auto,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "crossref" | "json" => Ok(InputFormat::Crossref),
            "tei" | "xml" => Ok(InputFormat::Tei),
            "auto" => Ok(InputFormat::Auto),
            other => Err(format!("unknown format {other:?} (expected crossref, tei or auto)")),
        }
    }
}

impl InputFormat {
    /// Concrete format for `path`; `None` when auto-detection does not
    /// recognise the extension.
    pub fn resolve(self, path: &Path) -> Option<InputFormat> {
        match self {
            InputFormat::Auto => match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
                "json" => Some(InputFormat::Crossref),
                "xml" | "tei" => Some(InputFormat::Tei),
                _ => None,
            },
            concrete => Some(concrete),
        }
    }
}

/// Leading four-digit year: "2009a" and "2009-05-01" give 2009.
pub fn parse_year(raw: &str) -> Option<i32> {
    let t = raw.trim();
    let digits: String = t.chars().take(4).collect();
    if digits.len() == 4 && digits.chars().all(|c| c.is_ascii_digit()) {
        if t.chars().nth(4).is_some_and(|c| c.is_ascii_digit()) {
            return None;
        }
        digits.parse().ok()
    } else {
        None
    }
}

fn clean(s: &str) -> Option<String> {
    let c = collapse_whitespace(s);
    (!c.is_empty()).then_some(c)
}

fn json_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => clean(s),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn reference_from_json(item: &Value, index: usize) -> Reference {
    let field = |name: &str| item.get(name).and_then(json_text);
    let mut r = Reference::new(field("key").unwrap_or_else(|| format!("ref{}", index + 1)));
    r.year = field("year").as_deref().and_then(parse_year);
    r.volume = field("volume");
    r.first_page = field("first-page");
    r.first_author_surname = field("author");
    r.article_title = field("article-title");
    r.volume_title = field("volume-title");
    r.journal_title = field("journal-title");
    r.doi = field("DOI").map(|d| normalize_doi(&d)).filter(|d| !d.is_empty());
    r.unstructured = field("unstructured");
    r
}

/// Parses a Crossref works API response (`{"message": {...}}`).
pub fn parse_crossref_work(document: &[u8]) -> Result<CitingWork, IngestError> {
    let root: Value = serde_json::from_slice(document).map_err(|e| IngestError::Malformed(e.to_string()))?;
    let message = root
        .get("message")
        .filter(|m| m.is_object())
        .ok_or_else(|| IngestError::Malformed("missing `message` object".to_string()))?;
    let references = match message.get("reference") {
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, item)| reference_from_json(item, i))
            .collect(),
        _ => Vec::new(),
    };
    Ok(CitingWork {
        source_path: String::new(),
        citing_doi: message
            .get("DOI")
            .and_then(json_text)
            .map(|d| normalize_doi(&d)),
        references,
        reference_count_declared: message.get("reference-count").and_then(Value::as_u64),
    })
}

/// Raw DOIs listed in `message.reference[*].DOI`, normalized, in order,
/// duplicates kept.
pub fn crossref_reference_dois(document: &[u8]) -> Result<Vec<String>, IngestError> {
    Ok(parse_crossref_work(document)?
        .references
        .into_iter()
        .filter_map(|r| r.doi)
        .collect())
}

fn is(node: &Node, name: &str) -> bool {
    node.is_element() && node.tag_name().name() == name
}

fn node_text(node: &Node) -> Option<String> {
    let raw: String = node
        .descendants()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect::<Vec<_>>()
        .join("");
    clean(&raw)
}

fn first_desc<'a, 'i>(node: &Node<'a, 'i>, pred: impl Fn(&Node) -> bool) -> Option<Node<'a, 'i>> {
    node.descendants().find(|n| pred(n))
}

/// Maps one `biblStruct` element to a reference.
pub fn reference_from_bibl_struct(node: &Node, index: usize) -> Reference {
    let key = node
        .attribute((XML_NS, "id"))
        .or_else(|| node.attribute("id"))
        .map(str::to_string)
        .unwrap_or_else(|| format!("ref{}", index + 1));
    let mut r = Reference::new(key);

    r.first_author_surname = node
        .descendants()
        .filter(|n| is(n, "author"))
        .find_map(|a| first_desc(&a, |n| is(n, "surname")).and_then(|s| node_text(&s)));

    for title in node.descendants().filter(|n| is(n, "title")) {
        let slot = match title.attribute("level") {
            Some("a") => &mut r.article_title,
            Some("m") => &mut r.volume_title,
            Some("j") => &mut r.journal_title,
            _ => continue,
        };
        if slot.is_none() {
            *slot = node_text(&title);
        }
    }

    if let Some(date) = first_desc(node, |n| is(n, "date")) {
        r.year = date
            .attribute("when")
            .and_then(parse_year)
            .or_else(|| node_text(&date).as_deref().and_then(parse_year));
    }

    for scope in node.descendants().filter(|n| is(n, "biblScope")) {
        match scope.attribute("unit") {
            Some("volume") if r.volume.is_none() => r.volume = node_text(&scope),
            Some("page") if r.first_page.is_none() => {
                let from = scope.attribute("from").and_then(clean);
                let to = scope.attribute("to").and_then(clean);
                match (from, node_text(&scope)) {
                    (Some(f), _) => {
                        r.first_page = Some(f);
                        r.last_page = to;
                    }
                    (None, Some(text)) => {
                        let mut parts = text.splitn(2, ['-', '–', '—']);
                        r.first_page = parts.next().and_then(clean);
                        r.last_page = parts.next().and_then(clean).or(to);
                    }
                    (None, None) => {}
                }
            }
            _ => {}
        }
    }

    r.doi = node
        .descendants()
        .filter(|n| is(n, "idno"))
        .find(|n| n.attribute("type").is_some_and(|t| t.eq_ignore_ascii_case("doi")))
        .and_then(|n| node_text(&n))
        .map(|d| normalize_doi(&d))
        .filter(|d| !d.is_empty());

    r.unstructured = node
        .descendants()
        .filter(|n| is(n, "note"))
        .find(|n| n.attribute("type") == Some("raw_reference"))
        .and_then(|n| node_text(&n));
    r
}

fn top_level_bibl_structs<'a, 'i>(doc: &'a Document<'i>) -> Vec<Node<'a, 'i>> {
    doc.descendants()
        .filter(|n| is(n, "biblStruct"))
        .filter(|n| !n.ancestors().skip(1).any(|a| is(&a, "biblStruct")))
        .collect()
}

/// One reference per top-level `biblStruct`, in document order.
pub fn parse_tei_document(document: &[u8]) -> Result<CitingWork, IngestError> {
    let text = std::str::from_utf8(document).map_err(|e| IngestError::Malformed(e.to_string()))?;
    let doc = Document::parse(text).map_err(|e| IngestError::Malformed(e.to_string()))?;
    let references = top_level_bibl_structs(&doc)
        .iter()
        .enumerate()
        .map(|(i, node)| reference_from_bibl_struct(node, i))
        .collect();
    Ok(CitingWork {
        references,
        ..CitingWork::default()
    })
}

/// First `biblStruct` of a TEI fragment, as returned by a citation parser.
pub fn parse_tei_fragment(text: &str) -> Result<Option<Reference>, IngestError> {
    if text.trim().is_empty() {
        return Ok(None);
    }
    let doc = Document::parse(text).map_err(|e| IngestError::Malformed(e.to_string()))?;
    Ok(top_level_bibl_structs(&doc)
        .first()
        .map(|n| reference_from_bibl_struct(n, 0)))
}

pub fn read_work(path: &Path, format: InputFormat) -> Result<CitingWork, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let format = format
        .resolve(path)
        .ok_or_else(|| IngestError::Malformed(format!("unrecognised input format: {}", path.display())))?;
    let mut work = match format {
        InputFormat::Tei => parse_tei_document(&bytes)?,
        _ => parse_crossref_work(&bytes)?,
    };
    work.source_path = path.display().to_string();
    Ok(work)
}

pub fn crossref_work_url(base: &str, doi: &str) -> Result<String, IngestError> {
    let mut url = url::Url::parse(base).map_err(|e| IngestError::Url(e.to_string()))?;
    url.path_segments_mut()
        .map_err(|_| IngestError::Url(format!("{base} cannot be a base URL")))?
        .pop_if_empty()
        .push(doi.trim());
    Ok(url.to_string())
}

/// GET the Crossref record of `doi`, keeping the raw body alongside the
/// parsed work.
pub fn fetch_crossref_raw(doi: &str, guard: &NetGuard, base: &str) -> Result<(Vec<u8>, CitingWork), IngestError> {
    let url = crossref_work_url(base, doi)?;
    let request = HttpRequest::get(url).header("Accept", "application/json");
    let response = match guard.execute(&request) {
        Ok(r) => r,
        Err(NetError::QueryExecution { status: 404, .. }) => return Err(IngestError::NotFound(doi.to_string())),
        Err(e) => return Err(e.into()),
    };
    let work = parse_crossref_work(&response.body)?;
    Ok((response.body, work))
}

pub fn fetch_crossref_work(doi: &str, guard: &NetGuard, base: &str) -> Result<CitingWork, IngestError> {
    fetch_crossref_raw(doi, guard, base).map(|(_, work)| work)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::netguard::{GuardConfig, HttpResponse, ScriptedTransport};
    use std::sync::Arc;

    const LISTING_TITLE: &str = "Assessment of animal welfare measures for dairy cattle, beef bulls and veal calves";

    const LISTING_TEI: &str = r#"<TEI xmlns="http://www.tei-c.org/ns/1.0"><text><back><listBibl>
<biblStruct type="article" xml:id="b11">
  <analytic>
    <author>
      <persName>
        <surname>Forkman</surname>
        <forename>B</forename>
      </persName>
    </author>
    <author>
      <persName>
        <surname>Keeling</surname>
        <forename type="first">L</forename>
        <forename type="middle">J</forename>
      </persName>
    </author>
    <title level="a">
      Assessment of animal welfare measures for dairy cattle,
      beef bulls and veal calves
    </title>
  </analytic>
  <monogr>
    <title level="m">Welfare Quality® Reports</title>
    <imprint>
      <date when="2009">2009</date>
      <biblScope unit="volume">11</biblScope>
      <biblScope unit="page" from="297" to="" />
    </imprint>
  </monogr>
</biblStruct>
</listBibl></back></text></TEI>"#;

    const LISTING_JSON: &str = r#"{"status":"ok","message":{"DOI":"10.9999/CITING","reference-count":2,"reference":[
{"first-page": "297",
 "article-title": "Assessment of animal welfare measures for dairy\n    cattle, beef bulls and veal calves",
 "volume": "11", "author": "Forkman", "year": "2009",
 "journal-title": "Welfare Quality® Reports"},
{"key": "ref1",
 "unstructured": "Badiene, A. (2013). Croissance Sans urbanisation\ndurable, pas de développement durable [Growth\nwithout sustainable urbanization, no sustainable\ndevelopment]. Jeune Afrique, 4(1), 41-47."}
]}}"#;

    #[test]
    fn crossref_listing_items() {
        let work = parse_crossref_work(LISTING_JSON.as_bytes()).unwrap();
        assert_eq!(work.citing_doi.as_deref(), Some("10.9999/citing"));
        assert_eq!(work.reference_count_declared, Some(2));
        let r = &work.references[0];
        assert_eq!(r.key, "ref1");
        assert_eq!(r.first_page.as_deref(), Some("297"));
        assert_eq!(r.article_title.as_deref(), Some(LISTING_TITLE));
        assert_eq!(r.volume.as_deref(), Some("11"));
        assert_eq!(r.first_author_surname.as_deref(), Some("Forkman"));
        assert_eq!(r.year, Some(2009));
        assert_eq!(r.journal_title.as_deref(), Some("Welfare Quality® Reports"));

        let u = &work.references[1];
        assert_eq!(u.key, "ref1");
        assert!(u.unstructured.as_deref().unwrap().starts_with("Badiene, A. (2013). Croissance Sans urbanisation durable"));
        assert_eq!(u.year, None);
        assert_eq!(u.article_title, None);
        assert_eq!(u.first_author_surname, None);
    }

    #[test]
    fn crossref_without_references() {
        let work = parse_crossref_work(br#"{"message":{"reference-count":0}}"#).unwrap();
        assert!(work.references.is_empty());
        assert_eq!(work.reference_count_declared, Some(0));
    }

    #[test]
    fn crossref_malformed() {
        assert!(matches!(parse_crossref_work(b"{"), Err(IngestError::Malformed(_))));
        assert!(matches!(parse_crossref_work(br#"{"status":"ok"}"#), Err(IngestError::Malformed(_))));
    }

    #[test]
    fn crossref_numeric_and_suffixed_fields() {
        let doc = br#"{"message":{"reference":[{"year":"2009a","volume":11,"DOI":"10.1007%2FS11192-019-03217-6"}]}}"#;
        let r = &parse_crossref_work(doc).unwrap().references[0];
        assert_eq!(r.year, Some(2009));
        assert_eq!(r.volume.as_deref(), Some("11"));
        assert_eq!(r.doi.as_deref(), Some("10.1007/s11192-019-03217-6"));
    }

    #[test]
    fn tei_listing_matches_json() {
        let work = parse_tei_document(LISTING_TEI.as_bytes()).unwrap();
        assert_eq!(work.references.len(), 1);
        let r = &work.references[0];
        assert_eq!(r.key, "b11");
        assert_eq!(r.first_author_surname.as_deref(), Some("Forkman"));
        assert_eq!(r.article_title.as_deref(), Some(LISTING_TITLE));
        assert_eq!(r.volume_title.as_deref(), Some("Welfare Quality® Reports"));
        assert_eq!(r.year, Some(2009));
        assert_eq!(r.volume.as_deref(), Some("11"));
        assert_eq!(r.first_page.as_deref(), Some("297"));
        assert_eq!(r.last_page, None);

        let json = &parse_crossref_work(LISTING_JSON.as_bytes()).unwrap().references[0];
        assert_eq!(json.article_title, r.article_title);
        assert_eq!(json.first_author_surname, r.first_author_surname);
        assert_eq!(json.year, r.year);
        assert_eq!(json.volume, r.volume);
        assert_eq!(json.first_page, r.first_page);
    }

    #[test]
    fn tei_without_bibl_struct() {
        let work = parse_tei_document(b"<TEI><text/></TEI>").unwrap();
        assert!(work.references.is_empty());
    }

    #[test]
    fn tei_monograph_only() {
        let doc = br#"<listBibl><biblStruct><monogr><title level="m">Science of science</title><imprint><date when="2016-03">March 2016</date></imprint></monogr></biblStruct></listBibl>"#;
        let r = &parse_tei_document(doc).unwrap().references[0];
        assert_eq!(r.key, "ref1");
        assert_eq!(r.volume_title.as_deref(), Some("Science of science"));
        assert_eq!(r.year, Some(2016));
        let mut expected = Reference::new("ref1");
        expected.volume_title = r.volume_title.clone();
        expected.year = Some(2016);
        assert_eq!(*r, expected);
    }

    #[test]
    fn tei_malformed() {
        assert!(matches!(parse_tei_document(b"<a><b></a>"), Err(IngestError::Malformed(_))));
    }

    #[test]
    fn tei_page_range_text_and_doi() {
        let doc = br#"<biblStruct><analytic><idno type="DOI">10.1038/502295A</idno></analytic><monogr><title level="j">Nature</title><imprint><biblScope unit="page">295-297</biblScope></imprint></monogr></biblStruct>"#;
        let r = &parse_tei_document(doc).unwrap().references[0];
        assert_eq!(r.first_page.as_deref(), Some("295"));
        assert_eq!(r.last_page.as_deref(), Some("297"));
        assert_eq!(r.doi.as_deref(), Some("10.1038/502295a"));
        assert_eq!(r.journal_title.as_deref(), Some("Nature"));
    }

    #[test]
    fn year_parsing() {
        assert_eq!(parse_year("2009"), Some(2009));
        assert_eq!(parse_year("2009a"), Some(2009));
        assert_eq!(parse_year("2009-05-01"), Some(2009));
        assert_eq!(parse_year("n.d."), None);
        assert_eq!(parse_year("20091"), None);
        assert_eq!(parse_year("99"), None);
    }

    #[test]
    fn format_detection() {
        assert_eq!(InputFormat::Auto.resolve(Path::new("a/x.JSON")), Some(InputFormat::Crossref));
        assert_eq!(InputFormat::Auto.resolve(Path::new("x.xml")), Some(InputFormat::Tei));
        assert_eq!(InputFormat::Auto.resolve(Path::new("x.txt")), None);
        assert_eq!(InputFormat::Tei.resolve(Path::new("x.json")), Some(InputFormat::Tei));
    }

    #[test]
    fn works_url_escapes_doi() {
        assert_eq!(
            crossref_work_url(DEFAULT_CROSSREF_BASE, "10.1162/qss_a_00112").unwrap(),
            "https://api.crossref.org/works/10.1162%2Fqss_a_00112"
        );
        assert_eq!(
            crossref_work_url("http://localhost:9/works", "10.1/a b").unwrap(),
            "http://localhost:9/works/10.1%2Fa%20b"
        );
    }

    fn guard_with(responses: Vec<HttpResponse>) -> NetGuard {
        let t = Arc::new(ScriptedTransport::new(responses.into_iter().map(Ok)));
        NetGuard::new(t, Arc::new(ManualClock::new()), GuardConfig::default()).with_jitter(|| 0.0)
    }

    #[test]
    fn fetch_parses_body() {
        let g = guard_with(vec![HttpResponse { status: 200, body: LISTING_JSON.as_bytes().to_vec() }]);
        let work = fetch_crossref_work("10.9999/citing", &g, DEFAULT_CROSSREF_BASE).unwrap();
        assert_eq!(work.references.len(), 2);
    }

    #[test]
    fn fetch_not_found() {
        let g = guard_with(vec![HttpResponse { status: 404, body: b"Resource not found.".to_vec() }; 3]);
        assert!(matches!(
            fetch_crossref_work("10.5281/zenodo.1", &g, DEFAULT_CROSSREF_BASE),
            Err(IngestError::NotFound(_))
        ));
    }

    #[test]
    fn fetch_zero_references() {
        let g = guard_with(vec![HttpResponse { status: 200, body: br#"{"message":{"reference-count":0}}"#.to_vec() }]);
        let work = fetch_crossref_work("10.1/x", &g, DEFAULT_CROSSREF_BASE).unwrap();
        assert!(work.references.is_empty());
    }
}
