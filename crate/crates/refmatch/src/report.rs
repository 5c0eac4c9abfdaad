//! Run artifacts: matched and unmatched CSVs, the statistics text file and
//! the static HTML report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use refmatch_core::{MatchOutcome, QueryTier, Reference};
use serde::{Deserialize, Serialize};

use crate::fsutil::atomic_write;

pub const MATCHED_HEADER: [&str; 7] = [
    "ref_key",
    "reference_title",
    "matched_title",
    "score",
    "doi",
    "meta_id",
    "query_tier",
];

pub const UNMATCHED_HEADER: [&str; 15] = [
    "ref_key",
    "year",
    "volume",
    "first_page",
    "first_author_surname",
    "article_title",
    "volume_title",
    "journal_title",
    "doi",
    "unstructured",
    "failure_type",
    "score_original",
    "score_after_grobid",
    "score_without_year",
    "grobid_attempted",
];

/// A reference as read from its source, next to what matching made of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceResult {
    pub reference: Reference,
    pub outcome: MatchOutcome,
}

/// Parameters echoed in the statistics file and the HTML report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParameters {
    pub threshold: u32,
    pub use_doi: bool,
    pub candidate_limit: usize,
    pub rate: f64,
    pub burst: f64,
    pub batch_size: usize,
    pub batch_pause_secs: f64,
    pub ref_concurrency: usize,
    pub error_threshold: u32,
    pub store: String,
    pub parser: String,
}

impl Default for RunParameters {
    fn default() -> Self {
        RunParameters {
            threshold: 26,
            use_doi: true,
            candidate_limit: 50,
            rate: 2.5,
            burst: 10.0,
            batch_size: 3,
            batch_pause_secs: 10.0,
            ref_concurrency: 10,
            error_threshold: 10,
            store: String::new(),
            parser: String::new(),
        }
    }
}

impl RunParameters {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("threshold", self.threshold.to_string()),
            ("use_doi", self.use_doi.to_string()),
            ("candidate_limit", self.candidate_limit.to_string()),
            ("rate", self.rate.to_string()),
            ("burst", self.burst.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("batch_pause_secs", self.batch_pause_secs.to_string()),
            ("ref_concurrency", self.ref_concurrency.to_string()),
            ("error_threshold", self.error_threshold.to_string()),
            ("store", self.store.clone()),
            ("parser", self.parser.clone()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileOutcome {
    Done,
    Empty,
    Error,
}

impl FileOutcome {
    pub fn label(self) -> &'static str {
        match self {
            FileOutcome::Done => "done",
            FileOutcome::Empty => "empty",
            FileOutcome::Error => "error",
        }
    }
}

/// Per-file counts, kept in the checkpoint and shown in the HTML report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSummary {
    pub path: String,
    pub outcome: FileOutcome,
    pub references: u64,
    pub matched: u64,
    pub grobid_attempts: u64,
    pub grobid_successes: u64,
    #[serde(default)]
    pub matches_by_tier: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FileSummary {
    pub fn from_results(path: &str, results: &[ReferenceResult]) -> Self {
        let mut summary = FileSummary {
            path: path.to_string(),
            outcome: if results.is_empty() { FileOutcome::Empty } else { FileOutcome::Done },
            references: results.len() as u64,
            matched: 0,
            grobid_attempts: 0,
            grobid_successes: 0,
            matches_by_tier: BTreeMap::new(),
            error: None,
        };
        for r in results {
            let o = &r.outcome;
            if o.grobid_attempted {
                summary.grobid_attempts += 1;
            }
            if let (true, Some(tier)) = (o.is_matched(), o.query_tier) {
                summary.matched += 1;
                *summary.matches_by_tier.entry(tier.label().to_string()).or_default() += 1;
                if o.grobid_attempted {
                    summary.grobid_successes += 1;
                }
            }
        }
        summary
    }

    pub fn failed(path: &str, error: impl Into<String>) -> Self {
        FileSummary {
            path: path.to_string(),
            outcome: FileOutcome::Error,
            references: 0,
            matched: 0,
            grobid_attempts: 0,
            grobid_successes: 0,
            matches_by_tier: BTreeMap::new(),
            error: Some(error.into()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub total_files_attempted: u64,
    pub files_processed: u64,
    pub empty_files: u64,
    pub files_with_errors: u64,
    pub references_total: u64,
    pub references_matched: u64,
    pub matches_by_tier: BTreeMap<String, u64>,
    pub grobid_attempts: u64,
    pub grobid_successes: u64,
}

impl AggregateStats {
    pub fn from_summaries<'a>(summaries: impl IntoIterator<Item = &'a FileSummary>) -> Self {
        let mut s = AggregateStats::default();
        for f in summaries {
            s.total_files_attempted += 1;
            match f.outcome {
                FileOutcome::Done => s.files_processed += 1,
                FileOutcome::Empty => s.empty_files += 1,
                FileOutcome::Error => s.files_with_errors += 1,
            }
            s.references_total += f.references;
            s.references_matched += f.matched;
            s.grobid_attempts += f.grobid_attempts;
            s.grobid_successes += f.grobid_successes;
            for (tier, n) in &f.matches_by_tier {
                *s.matches_by_tier.entry(tier.clone()).or_default() += n;
            }
        }
        s
    }

    pub fn match_rate(&self) -> Option<f64> {
        (self.references_total > 0).then(|| self.references_matched as f64 / self.references_total as f64)
    }

    /// Tiers with at least one match, most matches first, cascade order on
    /// ties.
    pub fn tiers_by_count(&self) -> Vec<(String, u64)> {
        let mut tiers: Vec<(String, u64)> = self
            .matches_by_tier
            .iter()
            .filter(|(_, n)| **n > 0)
            .map(|(t, n)| (t.clone(), *n))
            .collect();
        let order = |t: &str| QueryTier::from_label(t).map_or(usize::MAX, QueryTier::ordinal);
        tiers.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| order(&a.0).cmp(&order(&b.0))).then_with(|| a.0.cmp(&b.0)));
        tiers
    }
}

fn opt_num(v: Option<u32>) -> String {
    v.map(|n| n.to_string()).unwrap_or_default()
}

fn s(v: &Option<String>) -> &str {
    v.as_deref().unwrap_or("")
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> io::Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

pub fn matched_csv(results: &[ReferenceResult]) -> io::Result<Vec<u8>> {
    let rows = results
        .iter()
        .filter(|r| r.outcome.is_matched())
        .map(|r| {
            let o = &r.outcome;
            vec![
                o.ref_key.clone(),
                r.reference.display_title().unwrap_or("").to_string(),
                s(&o.matched_title).to_string(),
                opt_num(o.score.map(|sc| sc.total)),
                s(&o.matched_doi).to_string(),
                s(&o.matched_meta_id).to_string(),
                o.query_tier.map(|t| t.label().to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    csv_bytes(&MATCHED_HEADER, rows)
}

pub fn unmatched_csv(results: &[ReferenceResult]) -> io::Result<Vec<u8>> {
    let rows = results
        .iter()
        .filter(|r| !r.outcome.is_matched())
        .map(|r| {
            let (f, o) = (&r.reference, &r.outcome);
            vec![
                o.ref_key.clone(),
                f.year.map(|y| y.to_string()).unwrap_or_default(),
                s(&f.volume).to_string(),
                s(&f.first_page).to_string(),
                s(&f.first_author_surname).to_string(),
                s(&f.article_title).to_string(),
                s(&f.volume_title).to_string(),
                s(&f.journal_title).to_string(),
                s(&f.doi).to_string(),
                s(&f.unstructured).to_string(),
                o.status.failure_kind().map(|k| k.label()).unwrap_or("").to_string(),
                opt_num(o.score_original),
                opt_num(o.score_after_grobid),
                opt_num(o.score_without_year),
                o.grobid_attempted.to_string(),
            ]
        })
        .collect();
    csv_bytes(&UNMATCHED_HEADER, rows)
}

pub fn write_matched_csv(results: &[ReferenceResult], path: &Path) -> io::Result<()> {
    atomic_write(path, &matched_csv(results)?)
}

pub fn write_unmatched_csv(results: &[ReferenceResult], path: &Path) -> io::Result<()> {
    atomic_write(path, &unmatched_csv(results)?)
}

pub fn matched_path(dir: &Path, base: &str) -> std::path::PathBuf {
    dir.join(format!("{base}_matches.csv"))
}

pub fn unmatched_path(dir: &Path, base: &str) -> std::path::PathBuf {
    dir.join(format!("{base}_unmatched.csv"))
}

/// Both per-file CSVs for one input file.
pub fn write_file_outputs(dir: &Path, base: &str, results: &[ReferenceResult]) -> io::Result<()> {
    write_matched_csv(results, &matched_path(dir, base))?;
    write_unmatched_csv(results, &unmatched_path(dir, base))
}

fn percent(rate: Option<f64>) -> String {
    rate.map(|r| format!("{:.2}%", r * 100.0)).unwrap_or_else(|| "n/a".to_string())
}

pub fn stats_text(stats: &AggregateStats, params: &RunParameters) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Reference matching statistics");
    let _ = writeln!(out);
    for (name, value) in [
        ("total_files_attempted", stats.total_files_attempted),
        ("files_processed", stats.files_processed),
        ("empty_files", stats.empty_files),
        ("files_with_errors", stats.files_with_errors),
        ("references_total", stats.references_total),
        ("references_matched", stats.references_matched),
        ("grobid_attempts", stats.grobid_attempts),
        ("grobid_successes", stats.grobid_successes),
    ] {
        let _ = writeln!(out, "{name}: {value}");
    }
    let _ = writeln!(out, "match_rate: {}", percent(stats.match_rate()));
    let _ = writeln!(out);
    let _ = writeln!(out, "matches_by_tier:");
    let tiers = stats.tiers_by_count();
    for (tier, n) in &tiers {
        let _ = writeln!(out, "  {tier}: {n}");
    }
    let _ = writeln!(
        out,
        "most_successful_tier: {}",
        tiers.first().map(|(t, _)| t.as_str()).unwrap_or("n/a")
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "parameters:");
    for (k, v) in params.pairs() {
        let _ = writeln!(out, "  {k}: {v}");
    }
    out
}

pub fn write_stats_txt(stats: &AggregateStats, params: &RunParameters, path: &Path) -> io::Result<()> {
    atomic_write(path, stats_text(stats, params).as_bytes())
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Self-contained HTML page. Identical inputs give identical bytes.
pub fn render_html(
    stats: &AggregateStats,
    files: &[FileSummary],
    params: &RunParameters,
    generated_at: &str,
) -> String {
    let mut h = String::new();
    h.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Reference matching report</title>\n<style>\n");
    h.push_str("body{font-family:sans-serif;margin:2em;color:#222}table{border-collapse:collapse;margin-bottom:1.5em}\n");
    h.push_str("td,th{border:1px solid #ccc;padding:4px 8px;text-align:left}th{background:#f0f0f0}\n");
    h.push_str(".bar{background:#4a7ebb;height:14px}.num{text-align:right}\n</style>\n</head>\n<body>\n");
    h.push_str("<h1>Reference matching report</h1>\n");
    let _ = writeln!(h, "<p>Generated {}</p>", esc(generated_at));

    h.push_str("<h2>Summary</h2>\n<table>\n");
    for (name, value) in [
        ("total_files_attempted", stats.total_files_attempted),
        ("files_processed", stats.files_processed),
        ("empty_files", stats.empty_files),
        ("files_with_errors", stats.files_with_errors),
        ("references_total", stats.references_total),
        ("references_matched", stats.references_matched),
        ("grobid_attempts", stats.grobid_attempts),
        ("grobid_successes", stats.grobid_successes),
    ] {
        let _ = writeln!(h, "<tr><th>{name}</th><td class=\"num\" id=\"{name}\">{value}</td></tr>");
    }
    let _ = writeln!(
        h,
        "<tr><th>match_rate</th><td class=\"num\" id=\"match_rate\">{}</td></tr>\n</table>",
        percent(stats.match_rate())
    );

    h.push_str("<h2>Matches by query tier</h2>\n<table>\n<tr><th>Tier</th><th>Matches</th><th></th></tr>\n");
    let tiers = stats.tiers_by_count();
    let max = tiers.first().map_or(1, |(_, n)| (*n).max(1));
    for (tier, n) in &tiers {
        let width = n * 300 / max;
        let _ = writeln!(
            h,
            "<tr><td>{}</td><td class=\"num\">{n}</td><td><div class=\"bar\" style=\"width:{width}px\"></div></td></tr>",
            esc(tier)
        );
    }
    h.push_str("</table>\n");

    h.push_str("<h2>Parameters</h2>\n<table>\n");
    for (k, v) in params.pairs() {
        let _ = writeln!(h, "<tr><th>{k}</th><td>{}</td></tr>", esc(&v));
    }
    h.push_str("</table>\n");

    h.push_str("<h2>Files</h2>\n<table>\n<tr><th>File</th><th>Status</th><th>References</th><th>Matched</th><th>Rate</th></tr>\n");
    let mut sorted: Vec<&FileSummary> = files.iter().collect();
    sorted.sort_by(|a, b| a.path.cmp(&b.path));
    for f in sorted {
        let rate = (f.references > 0).then(|| f.matched as f64 / f.references as f64);
        let _ = writeln!(
            h,
            "<tr><td>{}</td><td>{}</td><td class=\"num\">{}</td><td class=\"num\">{}</td><td class=\"num\">{}</td></tr>",
            esc(&f.path),
            f.outcome.label(),
            f.references,
            f.matched,
            percent(rate)
        );
    }
    h.push_str("</table>\n</body>\n</html>\n");
    h
}

pub fn write_html_report(
    stats: &AggregateStats,
    files: &[FileSummary],
    params: &RunParameters,
    generated_at: &str,
    path: &Path,
) -> io::Result<()> {
    atomic_write(path, render_html(stats, files, params, generated_at).as_bytes())
}
