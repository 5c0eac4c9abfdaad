//! Evaluation against DOI ground truth: `check_doi` verifies reference DOIs
//! against the store, `compare` lists missed and earned DOIs, `metrics`
//! computes TP/FP/FN/TN over the POS, NEG and PRED sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;
use std::path::{Path, PathBuf};

use log::{info, warn};
use refmatch_core::{normalize_doi, DoiLookup, EvaluationCounts};
use thiserror::Error;

use crate::fsutil::{atomic_write, file_base};
use crate::ingest::crossref_reference_dois;

pub const DOI_RESULTS_SUFFIX: &str = "_doi_results";
pub const UNMATCHED_DOIS_SUFFIX: &str = "_unmatched_dois";
pub const DOI_STATISTICS_SUFFIX: &str = "_doi_statistics";
pub const MATCHES_SUFFIX: &str = "_matches";
pub const COMPARISON_FILE: &str = "comparison_results.csv";
pub const OVERALL_FILE: &str = "overall_evaluation_metrics.csv";
pub const PER_BASE_FILE: &str = "metrics_debug_per_base.csv";
pub const FILTERED_DIR: &str = "filtered_matches";

pub const DOI_RESULTS_HEADER: [&str; 8] = [
    "doi",
    "meta_id",
    "title",
    "first_author_surname",
    "year",
    "volume",
    "first_page",
    "last_page",
];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: no `doi` column")]
    NoDoiColumn { path: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> io::Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), EvalError> {
    let bytes = csv_bytes(header, rows).map_err(io_err(path))?;
    atomic_write(path, &bytes).map_err(io_err(path))
}

type Row = HashMap<String, String>;

fn read_rows(path: &Path) -> Result<Vec<Row>, EvalError> {
    let csv_err = |source| EvalError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut rows = Vec::new();
    for row in reader.deserialize::<Row>() {
        rows.push(row.map_err(csv_err)?);
    }
    Ok(rows)
}

/// Normalized, non-empty DOIs of the `doi` column, as a set.
fn doi_set(path: &Path) -> Result<BTreeSet<String>, EvalError> {
    let headers = csv::Reader::from_path(path)
        .and_then(|mut r| r.headers().cloned())
        .map_err(|source| EvalError::Csv {
            path: path.display().to_string(),
            source,
        })?;
    if !headers.iter().any(|h| h == "doi") {
        return Err(EvalError::NoDoiColumn {
            path: path.display().to_string(),
        });
    }
    Ok(read_rows(path)?
        .into_iter()
        .filter_map(|r| r.get("doi").map(|d| normalize_doi(d)))
        .filter(|d| !d.is_empty())
        .collect())
}

/// `dir` files named `<base><suffix>.csv`, keyed by base.
fn files_with_suffix(dir: &Path, suffix: &str) -> Result<BTreeMap<String, PathBuf>, EvalError> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        if let Some(base) = file_base(&path).strip_suffix(suffix) {
            out.insert(base.to_string(), path);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckDoiFile {
    pub base: String,
    pub total_queries: u64,
    pub successful_queries: u64,
    pub error: Option<String>,
}

/// Verifies every distinct reference DOI of each Crossref JSON file in
/// `json_dir` and writes the three per-file CSVs into `output_dir`.
pub fn check_doi<S: DoiLookup + ?Sized>(
    json_dir: &Path,
    output_dir: &Path,
    store: &S,
) -> Result<Vec<CheckDoiFile>, EvalError> {
    std::fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;
    let mut inputs: Vec<PathBuf> = std::fs::read_dir(json_dir)
        .map_err(io_err(json_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().and_then(|e| e.to_str()) == Some("json"))
        .collect();
    inputs.sort();

    let mut report = Vec::new();
    for path in inputs {
        let base = file_base(&path);
        let mut entry = CheckDoiFile {
            base: base.clone(),
            ..CheckDoiFile::default()
        };
        match check_one(&path, &base, output_dir, store) {
            Ok((total, found)) => {
                entry.total_queries = total;
                entry.successful_queries = found;
                info!("{base}: {found}/{total} DOIs found");
            }
            Err(e) => {
                warn!("{base}: {e}");
                entry.error = Some(e);
            }
        }
        report.push(entry);
    }
    Ok(report)
}

fn check_one<S: DoiLookup + ?Sized>(
    path: &Path,
    base: &str,
    output_dir: &Path,
    store: &S,
) -> Result<(u64, u64), String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    let mut seen = BTreeSet::new();
    let dois: Vec<String> = crossref_reference_dois(&bytes)
        .map_err(|e| e.to_string())?
        .into_iter()
        .filter(|d| seen.insert(d.clone()))
        .collect();

    let mut found = Vec::new();
    let mut missing = Vec::new();
    for doi in &dois {
        match store.lookup_doi(doi).map_err(|e| format!("DOI {doi}: {e}"))? {
            Some(c) => found.push(vec![
                doi.clone(),
                c.meta_id,
                c.title.unwrap_or_default(),
                c.first_author_surname.unwrap_or_default(),
                c.year.map(|y| y.to_string()).unwrap_or_default(),
                c.volume.unwrap_or_default(),
                c.first_page.unwrap_or_default(),
                c.last_page.unwrap_or_default(),
            ]),
            None => missing.push(vec![doi.clone()]),
        }
    }
    let (total, ok) = (dois.len() as u64, found.len() as u64);
    let out = |suffix: &str| output_dir.join(format!("{base}{suffix}.csv"));
    write_csv(&out(DOI_RESULTS_SUFFIX), &DOI_RESULTS_HEADER, &found).map_err(|e| e.to_string())?;
    write_csv(&out(UNMATCHED_DOIS_SUFFIX), &["doi"], &missing).map_err(|e| e.to_string())?;
    write_csv(
        &out(DOI_STATISTICS_SUFFIX),
        &["total_queries", "successful_queries"],
        &[vec![total.to_string(), ok.to_string()]],
    )
    .map_err(|e| e.to_string())?;
    Ok((total, ok))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Comparison {
    /// (file base, DOI) pairs verified present but not matched.
    pub missed: Vec<(String, String)>,
    /// (file base, DOI) pairs matched but not among the verified results.
    pub earned: Vec<(String, String)>,
    pub unpaired: Vec<String>,
}

fn paired(
    check_dir: &Path,
    matches_dir: &Path,
) -> Result<(BTreeMap<String, (PathBuf, PathBuf)>, Vec<String>), EvalError> {
    let results = files_with_suffix(check_dir, DOI_RESULTS_SUFFIX)?;
    let matches = files_with_suffix(matches_dir, MATCHES_SUFFIX)?;
    let mut pairs = BTreeMap::new();
    let mut unpaired = Vec::new();
    for (base, r) in &results {
        match matches.get(base) {
            Some(m) => {
                pairs.insert(base.clone(), (r.clone(), m.clone()));
            }
            None => unpaired.push(format!("{}", r.display())),
        }
    }
    for (base, m) in &matches {
        if !results.contains_key(base) {
            unpaired.push(format!("{}", m.display()));
        }
    }
    for u in &unpaired {
        warn!("no counterpart for {u}, skipped");
    }
    Ok((pairs, unpaired))
}

/// Writes `comparison_results.csv` into `output_dir`.
pub fn compare(doi_results_dir: &Path, matches_dir: &Path, output_dir: &Path) -> Result<Comparison, EvalError> {
    let (pairs, unpaired) = paired(doi_results_dir, matches_dir)?;
    let mut cmp = Comparison {
        unpaired,
        ..Comparison::default()
    };
    let mut rows = Vec::new();
    let mut totals = Vec::new();
    for (base, (results_path, matches_path)) in &pairs {
        let verified = doi_set(results_path)?;
        let predicted = doi_set(matches_path)?;
        let missed: Vec<&String> = verified.difference(&predicted).collect();
        let earned: Vec<&String> = predicted.difference(&verified).collect();
        for d in &missed {
            rows.push(vec![base.clone(), "missed".to_string(), (*d).clone(), String::new()]);
            cmp.missed.push((base.clone(), (*d).clone()));
        }
        for d in &earned {
            rows.push(vec![base.clone(), "earned".to_string(), (*d).clone(), String::new()]);
            cmp.earned.push((base.clone(), (*d).clone()));
        }
        totals.push(vec![base.clone(), "missed_total".to_string(), String::new(), missed.len().to_string()]);
        totals.push(vec![base.clone(), "earned_total".to_string(), String::new(), earned.len().to_string()]);
    }
    rows.extend(totals);
    rows.push(vec!["*".to_string(), "missed_total".to_string(), String::new(), cmp.missed.len().to_string()]);
    rows.push(vec!["*".to_string(), "earned_total".to_string(), String::new(), cmp.earned.len().to_string()]);
    std::fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;
    write_csv(&output_dir.join(COMPARISON_FILE), &["file_base", "kind", "doi", "count"], &rows)?;
    Ok(cmp)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub overall: EvaluationCounts,
    pub per_base: BTreeMap<String, EvaluationCounts>,
    pub unpaired: Vec<String>,
}

fn ratio_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// POS from `_doi_results`, NEG from `_unmatched_dois`, PRED from
/// `_matches`. Matched DOIs outside POS and NEG are not evaluated.
pub fn metrics(check_doi_dir: &Path, matches_dir: &Path, output_dir: &Path) -> Result<MetricsReport, EvalError> {
    let (pairs, unpaired) = paired(check_doi_dir, matches_dir)?;
    let negatives = files_with_suffix(check_doi_dir, UNMATCHED_DOIS_SUFFIX)?;
    let filtered_dir = output_dir.join(FILTERED_DIR);
    std::fs::create_dir_all(&filtered_dir).map_err(io_err(&filtered_dir))?;

    let mut report = MetricsReport {
        unpaired,
        ..MetricsReport::default()
    };
    let mut debug_rows = Vec::new();
    for (base, (results_path, matches_path)) in &pairs {
        let pos = doi_set(results_path)?;
        let neg = match negatives.get(base) {
            Some(p) => doi_set(p)?,
            None => BTreeSet::new(),
        };
        let pred = doi_set(matches_path)?;
        let counts = EvaluationCounts::from_sets(&pos, &neg, &pred);
        debug_rows.push(vec![
            base.clone(),
            pos.len().to_string(),
            neg.len().to_string(),
            pred.len().to_string(),
            counts.tp.to_string(),
            counts.fp.to_string(),
            counts.fn_.to_string(),
            counts.tn.to_string(),
        ]);
        report.overall += counts;
        report.per_base.insert(base.clone(), counts);
        write_filtered(results_path, matches_path, &pos, &filtered_dir.join(format!("{base}{MATCHES_SUFFIX}.csv")))?;
    }

    let c = report.overall;
    write_csv(
        &output_dir.join(OVERALL_FILE),
        &["tp", "fp", "fn", "tn", "precision", "recall", "f1", "accuracy"],
        &[vec![
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
            ratio_cell(c.precision()),
            ratio_cell(c.recall()),
            ratio_cell(c.f1()),
            ratio_cell(c.accuracy()),
        ]],
    )?;
    write_csv(
        &output_dir.join(PER_BASE_FILE),
        &["file_base", "pos", "neg", "pred", "tp", "fp", "fn", "tn"],
        &debug_rows,
    )?;
    Ok(report)
}

const FILTERED_HEADER: [&str; 14] = [
    "ref_key",
    "reference_title",
    "matched_title",
    "score",
    "doi",
    "meta_id",
    "query_tier",
    "store_meta_id",
    "store_title",
    "store_first_author_surname",
    "store_year",
    "store_volume",
    "store_first_page",
    "store_last_page",
];

/// True-positive match rows joined with the store metadata for the DOI.
fn write_filtered(results_path: &Path, matches_path: &Path, pos: &BTreeSet<String>, out: &Path) -> Result<(), EvalError> {
    let store_rows: HashMap<String, Row> = read_rows(results_path)?
        .into_iter()
        .filter_map(|r| Some((normalize_doi(r.get("doi")?), r)))
        .collect();
    let get = |r: &Row, k: &str| r.get(k).cloned().unwrap_or_default();
    let mut rows = Vec::new();
    for m in read_rows(matches_path)? {
        let doi = normalize_doi(&get(&m, "doi"));
        if doi.is_empty() || !pos.contains(&doi) {
            continue;
        }
        let s = store_rows.get(&doi).cloned().unwrap_or_default();
        rows.push(vec![
            get(&m, "ref_key"),
            get(&m, "reference_title"),
            get(&m, "matched_title"),
            get(&m, "score"),
            doi,
            get(&m, "meta_id"),
            get(&m, "query_tier"),
            get(&s, "meta_id"),
            get(&s, "title"),
            get(&s, "first_author_surname"),
            get(&s, "year"),
            get(&s, "volume"),
            get(&s, "first_page"),
            get(&s, "last_page"),
        ]);
    }
    write_csv(out, &FILTERED_HEADER, &rows)
}
