//! Synthetic corpora and helpers shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use refmatch::sparql::render_ntriples;
use refmatch_core::Candidate;
use serde_json::{json, Value};

pub const WORDS: [&str; 64] = [
    "adaptive", "analysis", "archive", "bayesian", "bibliometric", "boundary", "carbon", "catalogue",
    "citation", "climate", "cognitive", "corpus", "coupling", "dynamics", "ecology", "economic",
    "entropy", "evidence", "evolution", "field", "forest", "frontier", "genome", "graph",
    "growth", "heritage", "inference", "journal", "kinetic", "landscape", "language", "lattice",
    "learning", "library", "linked", "marine", "memory", "metadata", "migration", "network",
    "neural", "open", "ontology", "pattern", "policy", "protein", "quantum", "regional",
    "retrieval", "river", "scholarly", "semantic", "signal", "social", "soil", "spectral",
    "stochastic", "structure", "survey", "temporal", "theory", "urban", "variation", "β-catenin",
];

pub const SURNAMES: [&str; 24] = [
    "Peroni", "Shotton", "Heibi", "Massari", "Moretti", "Rossi", "Müller", "Gonçalves",
    "Peña", "Dvořák", "Šimůnek", "García", "Nguyen", "Okafor", "Smith", "Tanaka",
    "Lefèvre", "Öztürk", "Kowalski", "O'Brien", "van Dijk", "Silva", "Ångström", "Jensen",
];

fn title_case(words: &[&str]) -> String {
    let mut out = words.join(" ");
    if let Some(first) = out.get(..1) {
        let upper = first.to_uppercase();
        out.replace_range(..1, &upper);
    }
    out
}

/// Deterministic store records. Every fifteenth record lacks a DOI and
/// every seventh lacks a volume; volumes come from a small range so several
/// records share surname, year and volume.
pub fn corpus(n: usize, seed: u64) -> Vec<Candidate> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut c = Candidate::new(format!("omid:br/06{:05}", i + 1));
            let len = rng.gen_range(6..=9);
            let words: Vec<&str> = WORDS.choose_multiple(&mut rng, len).copied().collect();
            c.title = Some(title_case(&words));
            c.first_author_surname = Some(SURNAMES[rng.gen_range(0..SURNAMES.len())].to_string());
            c.year = Some(rng.gen_range(1995..=2022));
            if i % 7 != 3 {
                c.volume = Some(rng.gen_range(1..=12).to_string());
            }
            let first: u32 = rng.gen_range(1..=400);
            c.first_page = Some(first.to_string());
            c.last_page = Some((first + rng.gen_range(4..=30)).to_string());
            if i % 15 != 7 {
                c.doi = Some(format!("10.5555/syn.{}", i + 1));
            }
            c
        })
        .collect()
}

/// Author-date citation string in the layout the stub parser reads.
pub fn citation_string(c: &Candidate) -> String {
    format!(
        "{}, A. ({}). {}. Journal of Synthetic Studies, {}(2), {}-{}.",
        c.first_author_surname.as_deref().unwrap_or("Anon"),
        c.year.unwrap_or(2000),
        c.title.as_deref().unwrap_or("Untitled"),
        c.volume.as_deref().unwrap_or("1"),
        c.first_page.as_deref().unwrap_or("1"),
        c.last_page.as_deref().unwrap_or("2"),
    )
}

/// Which fields of a record a synthetic Crossref reference carries.
#[derive(Debug, Clone, Copy, Default)]
pub struct Carry {
    pub doi: bool,
    pub year: bool,
    pub title: bool,
    pub author: bool,
    pub volume: bool,
    pub page: bool,
    pub unstructured: bool,
}

impl Carry {
    pub const ALL: Carry = Carry {
        doi: true,
        year: true,
        title: true,
        author: true,
        volume: true,
        page: true,
        unstructured: false,
    };
}

pub fn reference_json(key: &str, c: &Candidate, carry: Carry) -> Value {
    let mut m = serde_json::Map::new();
    m.insert("key".into(), json!(key));
    let mut put = |on: bool, name: &str, v: Option<String>| {
        if let (true, Some(v)) = (on, v) {
            m.insert(name.into(), json!(v));
        }
    };
    put(carry.doi, "DOI", c.doi.clone());
    put(carry.year, "year", c.year.map(|y| y.to_string()));
    put(carry.title, "article-title", c.title.clone());
    put(carry.author, "author", c.first_author_surname.clone());
    put(carry.volume, "volume", c.volume.clone());
    put(carry.page, "first-page", c.first_page.clone());
    put(carry.unstructured, "unstructured", Some(citation_string(c)));
    Value::Object(m)
}

pub fn work_json(citing_doi: &str, references: &[Value]) -> String {
    json!({
        "status": "ok",
        "message": {
            "DOI": citing_doi,
            "reference-count": references.len(),
            "reference": references,
        }
    })
    .to_string()
}

/// All regular files under `dir` (non-recursive) by name, skipping names
/// for which `skip` is true.
pub fn read_files(dir: &Path, skip: impl Fn(&str) -> bool) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if path.is_file() && !skip(&name) {
            out.insert(name, std::fs::read(&path).unwrap());
        }
    }
    out
}

/// A local SPARQL endpoint backed by an in-memory triple store holding the
/// RDF rendering of `records`.
pub struct SparqlServer {
    pub url: String,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
}

impl SparqlServer {
    pub fn start(records: &[Candidate]) -> SparqlServer {
        use oxigraph::io::RdfFormat;
        use oxigraph::sparql::results::QueryResultsFormat;

        let store = oxigraph::store::Store::new().unwrap();
        let triples = render_ntriples(records).unwrap();
        store.load_from_reader(RdfFormat::NTriples, triples.as_bytes()).unwrap();

        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}/sparql", server.server_addr().to_ip().unwrap());
        let worker = Arc::clone(&server);
        // Nested REPLACE chains recurse deeply in unoptimized builds.
        let handle = std::thread::Builder::new().stack_size(256 << 20).spawn(move || {
            for mut request in worker.incoming_requests() {
                let mut body = String::new();
                let _ = request.as_reader().read_to_string(&mut body);
                let query = url::form_urlencoded::parse(body.as_bytes())
                    .find(|(k, _)| k == "query")
                    .map(|(_, v)| v.into_owned())
                    .unwrap_or_default();
                let response = match store
                    .query(query.as_str())
                    .and_then(|r| r.write(Vec::new(), QueryResultsFormat::Json))
                {
                    Ok(bytes) => tiny_http::Response::from_data(bytes).with_header(
                        "Content-Type: application/sparql-results+json"
                            .parse::<tiny_http::Header>()
                            .unwrap(),
                    ),
                    Err(e) => tiny_http::Response::from_data(format!("{e}\n{query}").into_bytes())
                        .with_status_code(400),
                };
                let _ = request.respond(response);
            }
        })
        .unwrap();
        SparqlServer {
            url,
            server,
            handle: Some(handle),
        }
    }
}

impl Drop for SparqlServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
