//! SPARQL adapter for an OpenCitations Meta style endpoint.
//!
//! Retrieval filters compare normalized forms. Titles and surnames are
//! normalized inside the query with `LCASE`/`REPLACE` chains generated from
//! the same tables the in-memory store uses, so both backends agree on which
//! records a tier admits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use refmatch_core::normalize::{fold_diacritics, GREEK_NAMES};
use refmatch_core::store::TierFilter;
use refmatch_core::{Candidate, CandidateSource, DoiLookup, QueryTier, Reference};
use serde_json::Value;
use thiserror::Error;

use crate::ingest::parse_year;
use crate::netguard::{HttpRequest, NetError, NetGuard};

pub const DEFAULT_ENDPOINT: &str = "https://w3id.org/oc/meta/sparql";
pub const BR_BASE: &str = "https://w3id.org/oc/meta/br/";
pub const META_ID_PREFIX: &str = "omid:br/";

const PREFIXES: &str = "\
PREFIX datacite: <http://purl.org/spar/datacite/>
PREFIX literal: <http://www.essepuntato.it/2010/06/literalreification/>
PREFIX dcterms: <http://purl.org/dc/terms/>
PREFIX prism: <http://prismstandard.org/namespaces/basic/2.0/>
PREFIX pro: <http://purl.org/spar/pro/>
PREFIX foaf: <http://xmlns.com/foaf/0.1/>
PREFIX frbr: <http://purl.org/vocab/frbr/core#>
PREFIX fabio: <http://purl.org/spar/fabio/>
PREFIX oco: <https://w3id.org/oc/ontology/>
";

#[derive(Debug, Error)]
pub enum SparqlError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("malformed SPARQL results: {0}")]
    Malformed(String),
    #[error("{0}")]
    MissingField(#[from] refmatch_core::MissingField),
    #[error("record id {0:?} is not of the form {META_ID_PREFIX}<id>")]
    BadMetaId(String),
}

/// `"omid:br/060"` to the resource IRI.
pub fn meta_id_to_iri(meta_id: &str) -> Option<String> {
    let local = meta_id.strip_prefix(META_ID_PREFIX)?;
    let ok = !local.is_empty() && local.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    ok.then(|| format!("{BR_BASE}{local}"))
}

pub fn iri_to_meta_id(iri: &str) -> String {
    match iri.strip_prefix(BR_BASE) {
        Some(local) => format!("{META_ID_PREFIX}{local}"),
        None => iri.to_string(),
    }
}

/// Escapes a value for a double-quoted SPARQL or N-Triples literal.
pub fn escape_literal(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

fn lit(value: &str) -> String {
    format!("\"{}\"", escape_literal(value))
}

fn trimmed(expr: &str) -> String {
    format!(r#"REPLACE({expr}, "^\\s+|\\s+$", "")"#)
}

/// Emits `BIND` steps computing `steps` applied in order to `input`, the
/// last one bound to `output`. A chain of BINDs instead of nested calls
/// keeps the query linear in size and cheap to parse.
fn bind_chain(input: &str, output: &str, steps: &[(String, String)]) -> String {
    let stem = output.trim_start_matches('?');
    let mut out = String::new();
    let mut current = format!("?{stem}_0");
    let _ = writeln!(out, "  BIND(LCASE(STR({input})) AS {current})");
    for (i, (pattern, replacement)) in steps.iter().enumerate() {
        let next = if i + 1 == steps.len() {
            output.to_string()
        } else {
            format!("?{stem}_{}", i + 1)
        };
        let _ = writeln!(out, "  BIND(REPLACE({current}, {}, {}) AS {next})", lit(pattern), lit(replacement));
        current = next;
    }
    out
}

/// Query-side counterpart of `normalize_title`: binds the normalized form
/// of `input` to `output`.
pub fn title_binds(input: &str, output: &str) -> String {
    let mut steps: Vec<(String, String)> = GREEK_NAMES
        .iter()
        .map(|(greek, name)| (greek.to_string(), name.to_string()))
        .collect();
    steps.push((r"[^\p{L}\p{N}]+".into(), " ".into()));
    steps.push(("^ | $".into(), String::new()));
    bind_chain(input, output, &steps)
}

/// Precomposed Latin letters grouped by their folded lowercase form.
fn fold_classes() -> BTreeMap<String, String> {
    let mut classes: BTreeMap<String, String> = BTreeMap::new();
    let ranges = ['\u{00C0}'..='\u{024F}', '\u{1E00}'..='\u{1EFF}'];
    for c in ranges.into_iter().flatten() {
        if !c.is_lowercase() {
            continue;
        }
        if let Some(folded) = fold_diacritics(c) {
            let folded = folded.to_lowercase();
            if folded.chars().all(|f| f.is_ascii_alphabetic()) {
                classes.entry(folded).or_default().push(c);
            }
        }
    }
    classes
}

/// Query-side counterpart of `normalize_surname`: binds the folded,
/// lowercased form of `input` to `output`.
pub fn surname_binds(input: &str, output: &str) -> String {
    let mut steps: Vec<(String, String)> = fold_classes()
        .into_iter()
        .map(|(folded, chars)| (format!("[{chars}]"), folded))
        .collect();
    steps.push((r"\p{M}".into(), String::new()));
    steps.push((r"\s+".into(), " ".into()));
    steps.push(("^ | $".into(), String::new()));
    bind_chain(input, output, &steps)
}

const OUTPUTS: [(&str, &str); 7] = [
    ("doi_lit", "doi"),
    ("title_lit", "title"),
    ("fam_lit", "surname"),
    ("date_lit", "date"),
    ("vol_lit", "volume"),
    ("spage_lit", "spage"),
    ("epage_lit", "epage"),
];

fn doi_pattern() -> &'static str {
    "?br datacite:hasIdentifier ?doi_id . ?doi_id datacite:usesIdentifierScheme datacite:doi ; literal:hasLiteralValue ?doi_lit ."
}

fn author_pattern() -> &'static str {
    "?br pro:isDocumentContextFor ?role . ?role pro:withRole pro:author ; pro:isHeldBy ?ra . ?ra foaf:familyName ?fam_lit . \
     FILTER NOT EXISTS { ?prev_role oco:hasNext ?role . ?br pro:isDocumentContextFor ?prev_role . ?prev_role pro:withRole pro:author }"
}

fn volume_pattern() -> &'static str {
    "?br frbr:partOf+ ?vol . ?vol a fabio:JournalVolume ; fabio:hasSequenceIdentifier ?vol_lit ."
}

/// SELECT query returning every record the tier admits for `filter`.
///
/// Required patterns come before every OPTIONAL: an OPTIONAL that opens a
/// group joins against the empty solution and would drop records lacking
/// the optional data.
pub fn build_tier_query(filter: &TierFilter, limit: usize) -> String {
    let mut required = String::new();
    let mut optional = String::new();
    let mut conditions: Vec<String> = Vec::new();

    if let Some(doi) = &filter.doi {
        let _ = writeln!(required, "  VALUES ?doi_lit {{ {} }}", lit(doi));
        let _ = writeln!(required, "  {}", doi_pattern());
    } else {
        let _ = writeln!(optional, "  OPTIONAL {{ {} }}", doi_pattern());
    }

    if let Some(years) = filter.years {
        let _ = writeln!(required, "  ?br prism:publicationDate ?date_lit .");
        let set: Vec<String> = years.iter().map(|y| lit(&format!("{y:04}"))).collect();
        conditions.push(format!("SUBSTR(STR(?date_lit), 1, 4) IN ({})", set.join(", ")));
    } else {
        let _ = writeln!(optional, "  OPTIONAL {{ ?br prism:publicationDate ?date_lit }}");
    }

    if let Some(volume) = &filter.volume {
        let _ = writeln!(required, "  {}", volume_pattern());
        conditions.push(format!("{} = {}", trimmed("STR(?vol_lit)"), lit(volume)));
    } else {
        let _ = writeln!(optional, "  OPTIONAL {{ {} }}", volume_pattern());
    }

    if let Some(page) = &filter.first_page {
        let _ = writeln!(required, "  ?br frbr:embodiment ?re . ?re prism:startingPage ?spage_lit .");
        let _ = writeln!(optional, "  OPTIONAL {{ ?re prism:endingPage ?epage_lit }}");
        conditions.push(format!("{} = {}", trimmed("STR(?spage_lit)"), lit(page)));
    } else {
        let _ = writeln!(
            optional,
            "  OPTIONAL {{ ?br frbr:embodiment ?re . OPTIONAL {{ ?re prism:startingPage ?spage_lit }} OPTIONAL {{ ?re prism:endingPage ?epage_lit }} }}"
        );
    }

    if let Some(surname) = &filter.surname {
        let _ = writeln!(required, "  {}", author_pattern());
        required.push_str(&surname_binds("?fam_lit", "?fam_norm"));
        conditions.push(format!("?fam_norm = {}", lit(surname)));
    } else {
        let _ = writeln!(optional, "  OPTIONAL {{ {} }}", author_pattern());
    }

    if let Some(title) = &filter.title {
        let _ = writeln!(required, "  ?br dcterms:title ?title_lit .");
        required.push_str(&title_binds("?title_lit", "?title_norm"));
        conditions.push(format!("?title_norm = {}", lit(title)));
    } else {
        let _ = writeln!(optional, "  OPTIONAL {{ ?br dcterms:title ?title_lit }}");
    }

    let mut body = required;
    body.push_str(&optional);
    if !conditions.is_empty() {
        // Cheap comparisons first; && short-circuits.
        let _ = writeln!(body, "  FILTER({})", conditions.join("\n    && "));
    }

    select(&body, limit)
}

/// Record lookup by exact (normalized) DOI.
pub fn build_doi_query(doi: &str) -> String {
    let mut body = String::new();
    let _ = writeln!(body, "  VALUES ?doi_lit {{ {} }}", lit(doi));
    let _ = writeln!(body, "  {}", doi_pattern());
    let _ = writeln!(body, "  OPTIONAL {{ ?br prism:publicationDate ?date_lit }}");
    let _ = writeln!(body, "  OPTIONAL {{ {} }}", volume_pattern());
    let _ = writeln!(
        body,
        "  OPTIONAL {{ ?br frbr:embodiment ?re . OPTIONAL {{ ?re prism:startingPage ?spage_lit }} OPTIONAL {{ ?re prism:endingPage ?epage_lit }} }}"
    );
    let _ = writeln!(body, "  OPTIONAL {{ {} }}", author_pattern());
    let _ = writeln!(body, "  OPTIONAL {{ ?br dcterms:title ?title_lit }}");
    select(&body, 1)
}

fn select(body: &str, limit: usize) -> String {
    let projections: Vec<String> = OUTPUTS
        .iter()
        .map(|(inner, outer)| format!("(SAMPLE(?{inner}) AS ?{outer})"))
        .collect();
    format!(
        "{PREFIXES}SELECT ?br {}\nWHERE {{\n{body}}}\nGROUP BY ?br\nORDER BY ?br\nLIMIT {limit}\n",
        projections.join(" ")
    )
}

fn binding(row: &Value, name: &str) -> Option<String> {
    let value = row.get(name)?.get("value")?.as_str()?.trim();
    (!value.is_empty()).then(|| value.to_string())
}

/// Reads `application/sparql-results+json` produced by the queries above.
pub fn parse_results(body: &[u8]) -> Result<Vec<Candidate>, SparqlError> {
    let root: Value = serde_json::from_slice(body).map_err(|e| SparqlError::Malformed(e.to_string()))?;
    let rows = root
        .pointer("/results/bindings")
        .and_then(Value::as_array)
        .ok_or_else(|| SparqlError::Malformed("missing results.bindings".to_string()))?;
    rows.iter()
        .map(|row| {
            let iri = binding(row, "br").ok_or_else(|| SparqlError::Malformed("row without ?br".to_string()))?;
            let mut c = Candidate::new(iri_to_meta_id(&iri));
            c.doi = binding(row, "doi");
            c.title = binding(row, "title");
            c.first_author_surname = binding(row, "surname");
            c.year = binding(row, "date").as_deref().and_then(parse_year);
            c.volume = binding(row, "volume");
            c.first_page = binding(row, "spage");
            c.last_page = binding(row, "epage");
            Ok(c.sanitized())
        })
        .collect()
}

/// Store backed by a remote SPARQL endpoint. Every request goes through the
/// shared [`NetGuard`].
#[derive(Debug, Clone)]
pub struct SparqlStore {
    endpoint: String,
    guard: Arc<NetGuard>,
}

impl SparqlStore {
    pub fn new(endpoint: impl Into<String>, guard: Arc<NetGuard>) -> Self {
        SparqlStore {
            endpoint: endpoint.into(),
            guard,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn select(&self, query: &str) -> Result<Vec<Candidate>, SparqlError> {
        let request = HttpRequest::post_form(self.endpoint.as_str(), &[("query", query)])
            .header("Accept", "application/sparql-results+json");
        let response = self.guard.execute(&request)?;
        parse_results(&response.body)
    }
}

impl CandidateSource for SparqlStore {
    type Error = SparqlError;

    fn retrieve(&self, probe: &Reference, tier: QueryTier, limit: usize) -> Result<Vec<Candidate>, SparqlError> {
        let filter = TierFilter::new(probe, tier)?;
        let mut found = self.select(&build_tier_query(&filter, limit))?;
        found.sort_by(|a, b| a.meta_id.cmp(&b.meta_id));
        found.truncate(limit);
        Ok(found)
    }
}

impl DoiLookup for SparqlStore {
    type Error = SparqlError;

    fn lookup_doi(&self, doi: &str) -> Result<Option<Candidate>, SparqlError> {
        Ok(self.select(&build_doi_query(doi))?.into_iter().next())
    }
}

/// Renders records as N-Triples in the data model the queries expect.
pub fn render_ntriples(records: &[Candidate]) -> Result<String, SparqlError> {
    const DATACITE: &str = "http://purl.org/spar/datacite/";
    const LITERAL: &str = "http://www.essepuntato.it/2010/06/literalreification/hasLiteralValue";
    const PRO: &str = "http://purl.org/spar/pro/";
    const PRISM: &str = "http://prismstandard.org/namespaces/basic/2.0/";
    const FRBR: &str = "http://purl.org/vocab/frbr/core#";
    const FABIO: &str = "http://purl.org/spar/fabio/";
    const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

    let mut out = String::new();
    for record in records {
        let br = meta_id_to_iri(&record.meta_id).ok_or_else(|| SparqlError::BadMetaId(record.meta_id.clone()))?;
        let mut triple = |s: &str, p: &str, o: String| {
            let _ = writeln!(out, "<{s}> <{p}> {o} .");
        };
        triple(&br, RDF_TYPE, format!("<{FABIO}JournalArticle>"));
        if let Some(doi) = &record.doi {
            let id = format!("{br}/id/doi");
            triple(&br, &format!("{DATACITE}hasIdentifier"), format!("<{id}>"));
            triple(&id, &format!("{DATACITE}usesIdentifierScheme"), format!("<{DATACITE}doi>"));
            triple(&id, LITERAL, lit(doi));
        }
        if let Some(title) = &record.title {
            triple(&br, "http://purl.org/dc/terms/title", lit(title));
        }
        if let Some(year) = record.year {
            triple(&br, &format!("{PRISM}publicationDate"), lit(&format!("{year:04}")));
        }
        if let Some(volume) = &record.volume {
            let vol = format!("{br}/volume");
            triple(&br, &format!("{FRBR}partOf"), format!("<{vol}>"));
            triple(&vol, RDF_TYPE, format!("<{FABIO}JournalVolume>"));
            triple(&vol, &format!("{FABIO}hasSequenceIdentifier"), lit(volume));
        }
        if record.first_page.is_some() || record.last_page.is_some() {
            let re = format!("{br}/re");
            triple(&br, &format!("{FRBR}embodiment"), format!("<{re}>"));
            if let Some(p) = &record.first_page {
                triple(&re, &format!("{PRISM}startingPage"), lit(p));
            }
            if let Some(p) = &record.last_page {
                triple(&re, &format!("{PRISM}endingPage"), lit(p));
            }
        }
        if let Some(surname) = &record.first_author_surname {
            let role = format!("{br}/ar/1");
            let ra = format!("{br}/ra/1");
            triple(&br, &format!("{PRO}isDocumentContextFor"), format!("<{role}>"));
            triple(&role, &format!("{PRO}withRole"), format!("<{PRO}author>"));
            triple(&role, &format!("{PRO}isHeldBy"), format!("<{ra}>"));
            triple(&ra, "http://xmlns.com/foaf/0.1/familyName", lit(surname));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::netguard::{GuardConfig, HttpResponse, ScriptedTransport};
    use refmatch_core::normalize_surname;

    #[test]
    fn meta_id_mapping() {
        assert_eq!(meta_id_to_iri("omid:br/0601").as_deref(), Some("https://w3id.org/oc/meta/br/0601"));
        assert_eq!(meta_id_to_iri("omid:br/06> <x"), None);
        assert_eq!(meta_id_to_iri("br/1"), None);
        assert_eq!(iri_to_meta_id("https://w3id.org/oc/meta/br/0601"), "omid:br/0601");
    }

    #[test]
    fn literal_escaping_blocks_injection() {
        assert_eq!(escape_literal(r#"a" } DROP ALL { "b\"#), r#"a\" } DROP ALL { \"b\\"#);
        let mut probe = Reference::new("r");
        probe.article_title = Some(r#"x" ) } DELETE WHERE { ?s ?p ?o } #"#.to_string());
        probe.first_author_surname = Some("Smith".to_string());
        let q = build_tier_query(&TierFilter::new(&probe, QueryTier::AuthorTitle).unwrap(), 5);
        assert!(!q.contains("DELETE WHERE { ?s"), "{q}");
    }

    #[test]
    fn fold_classes_cover_common_letters() {
        let classes = fold_classes();
        assert!(classes["a"].contains('á'));
        assert!(classes["c"].contains('ç'));
        for (folded, chars) in &classes {
            for c in chars.chars() {
                assert_eq!(&normalize_surname(&c.to_string()), folded);
            }
        }
    }

    #[test]
    fn tier_query_shape() {
        let mut probe = Reference::new("r");
        probe.year = Some(2009);
        probe.volume = Some(" 11 ".to_string());
        probe.first_page = Some("297".to_string());
        let q = build_tier_query(&TierFilter::new(&probe, QueryTier::YearVolumePage).unwrap(), 50);
        assert!(q.contains(r#"IN ("2008", "2009", "2010")"#));
        assert!(q.contains(r#"= "11""#));
        assert!(q.contains("OPTIONAL { ?br datacite:hasIdentifier"));
        assert!(q.contains("LIMIT 50"));
        assert!(q.contains("GROUP BY ?br"));
    }

    #[test]
    fn required_patterns_precede_optionals() {
        for tier in QueryTier::ALL {
            let mut probe = Reference::new("r");
            probe.year = Some(2009);
            probe.doi = Some("10.1/x".to_string());
            probe.article_title = Some("Open citations".to_string());
            probe.first_author_surname = Some("Peroni".to_string());
            probe.volume = Some("11".to_string());
            probe.first_page = Some("297".to_string());
            let q = build_tier_query(&TierFilter::new(&probe, tier).unwrap(), 50);
            let lines: Vec<&str> = q
                .lines()
                .skip_while(|l| !l.starts_with("WHERE {"))
                .skip(1)
                .take_while(|l| !l.trim_start().starts_with("FILTER(") && *l != "}")
                .map(str::trim_start)
                .collect();
            let first_optional = lines.iter().position(|l| l.starts_with("OPTIONAL")).unwrap();
            assert!(first_optional > 0, "{tier}: {q}");
            assert!(lines[first_optional..].iter().all(|l| l.starts_with("OPTIONAL")), "{tier}: {q}");
        }
    }

    #[test]
    fn normalization_is_a_flat_bind_chain() {
        let binds = title_binds("?t", "?t_norm");
        assert!(binds.lines().all(|l| l.matches("REPLACE(").count() <= 1));
        assert!(binds.trim_end().ends_with("AS ?t_norm)"));
        let binds = surname_binds("?f", "?f_norm");
        assert!(binds.contains(r#""[çćĉċčḉ]", "c""#));
        assert!(binds.trim_end().ends_with("AS ?f_norm)"));
    }

    #[test]
    fn results_parsing() {
        let body = br#"{"head":{"vars":["br","doi"]},"results":{"bindings":[
            {"br":{"type":"uri","value":"https://w3id.org/oc/meta/br/062"},
             "doi":{"type":"literal","value":"10.1/ABC"},
             "date":{"type":"literal","value":"2009-05-01"},
             "spage":{"type":"literal","value":"297"}},
            {"br":{"type":"uri","value":"https://w3id.org/oc/meta/br/061"}}]}}"#;
        let rows = parse_results(body).unwrap();
        assert_eq!(rows[0].meta_id, "omid:br/062");
        assert_eq!(rows[0].doi.as_deref(), Some("10.1/abc"));
        assert_eq!(rows[0].year, Some(2009));
        assert_eq!(rows[0].first_page.as_deref(), Some("297"));
        assert_eq!(rows[1].title, None);
        assert!(matches!(parse_results(b"{}"), Err(SparqlError::Malformed(_))));
    }

    #[test]
    fn store_posts_form_query() {
        let transport = Arc::new(ScriptedTransport::new([Ok(HttpResponse {
            status: 200,
            body: br#"{"results":{"bindings":[]}}"#.to_vec(),
        })]));
        let guard = NetGuard::new(transport.clone(), Arc::new(ManualClock::new()), GuardConfig::default());
        let store = SparqlStore::new("http://localhost:1/sparql", Arc::new(guard));
        assert_eq!(store.lookup_doi("10.1/x").unwrap(), None);
        let sent = transport.requests();
        assert_eq!(sent.len(), 1);
        let body = String::from_utf8(sent[0].body.clone().unwrap()).unwrap();
        assert!(body.starts_with("query=PREFIX"));
    }

    #[test]
    fn missing_field_is_reported() {
        let transport = Arc::new(ScriptedTransport::statuses(&[]));
        let guard = NetGuard::new(transport, Arc::new(ManualClock::new()), GuardConfig::default());
        let store = SparqlStore::new("http://localhost:1/sparql", Arc::new(guard));
        let probe = Reference::new("r");
        assert!(matches!(
            store.retrieve(&probe, QueryTier::YearVolumePage, 5),
            Err(SparqlError::MissingField(_))
        ));
    }

    #[test]
    fn ntriples_rejects_foreign_ids() {
        assert!(render_ntriples(&[Candidate::new("x")]).is_err());
        let mut c = Candidate::new("omid:br/1");
        c.title = Some("A \"quoted\" title".to_string());
        let nt = render_ntriples(&[c]).unwrap();
        assert!(nt.contains(r#""A \"quoted\" title""#));
    }
}
