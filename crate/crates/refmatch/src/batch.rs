//! Directory runs: batches of files, bounded per-file parallelism,
//! checkpointing and the aggregate artifacts.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use log::{info, warn};
use refmatch_core::{match_reference, CandidateSource, CitationParser, MatchConfig, Reference};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::clock::Clock;
use crate::ingest::{read_work, InputFormat};
use crate::netguard::ErrorCounter;
use crate::report::{
    write_file_outputs, write_html_report, write_stats_txt, AggregateStats, FileSummary, ReferenceResult,
    RunParameters,
};

pub const STATS_FILE: &str = "aggregate_stats.txt";
pub const HTML_FILE: &str = "report.html";

#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub format: InputFormat,
    pub batch_size: usize,
    pub batch_pause: Duration,
    pub ref_concurrency: usize,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
    pub compress_every_batches: usize,
    pub error_threshold: u32,
    pub error_pause: Duration,
    /// Fixed timestamp for the HTML report; the clock is used when absent.
    pub generated_at: Option<String>,
    /// Stop without a final checkpoint write once this many files have been
    /// recorded, as a crash would.
    pub abort_after_files: Option<usize>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            format: InputFormat::Auto,
            batch_size: 3,
            batch_pause: Duration::from_secs(10),
            ref_concurrency: 10,
            checkpoint: None,
            checkpoint_every: 10,
            compress_every_batches: 10,
            error_threshold: 10,
            error_pause: Duration::from_secs(300),
            generated_at: None,
            abort_after_files: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("input directory {path}: {source}")]
    InputDir {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("output directory {path}: {source}")]
    OutputDir {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Everything a worker needs to match one reference.
pub struct MatchContext<'a, S: ?Sized, P: ?Sized> {
    pub store: &'a S,
    pub parser: Option<&'a P>,
    pub config: MatchConfig,
    pub clock: &'a dyn Clock,
    pub errors: Option<Arc<ErrorCounter>>,
    pub error_threshold: u32,
    pub error_pause: Duration,
}

impl<S: ?Sized, P: ?Sized> MatchContext<'_, S, P> {
    fn pause_if_needed(&self) {
        if let Some(errors) = &self.errors {
            errors.pause_if_needed(self.error_threshold, self.error_pause, self.clock);
        }
    }
}

/// Matches `references` with at most `concurrency` workers, keeping input
/// order. The first store error stops the remaining work.
pub fn match_references<S, P>(
    references: &[Reference],
    ctx: &MatchContext<'_, S, P>,
    concurrency: usize,
) -> Result<Vec<ReferenceResult>, String>
where
    S: CandidateSource + Sync + ?Sized,
    P: CitationParser + Sync + ?Sized,
{
    let workers = concurrency.max(1).min(references.len());
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<ReferenceResult, String>>>> =
        Mutex::new((0..references.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    return;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(reference) = references.get(i) else {
                    return;
                };
                ctx.pause_if_needed();
                let mut probe = reference.clone();
                probe.sanitize();
                let result = match_reference(&probe, ctx.store, ctx.parser, &ctx.config)
                    .map(|outcome| ReferenceResult {
                        reference: reference.clone(),
                        outcome,
                    })
                    .map_err(|e| format!("reference {}: {e}", reference.key));
                if result.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });

    let mut out = Vec::with_capacity(references.len());
    for slot in slots.into_inner().unwrap() {
        match slot {
            Some(Ok(r)) => out.push(r),
            Some(Err(e)) => return Err(e),
            None => return Err("matching stopped after an earlier failure".to_string()),
        }
    }
    Ok(out)
}

/// Reads, matches and writes the outputs of one file. Never fails: problems
/// are reported in the returned summary and leave no outputs behind.
pub fn process_file<S, P>(
    path: &Path,
    name: &str,
    output_dir: &Path,
    format: InputFormat,
    ctx: &MatchContext<'_, S, P>,
    concurrency: usize,
) -> FileSummary
where
    S: CandidateSource + Sync + ?Sized,
    P: CitationParser + Sync + ?Sized,
{
    let base = crate::fsutil::file_base(path);
    let work = match read_work(path, format) {
        Ok(w) => w,
        Err(e) => {
            warn!("{name}: {e}");
            return FileSummary::failed(name, e.to_string());
        }
    };
    let results = if work.references.is_empty() {
        info!("{name}: no references");
        Vec::new()
    } else {
        match match_references(&work.references, ctx, concurrency) {
            Ok(r) => r,
            Err(e) => {
                warn!("{name}: {e}");
                return FileSummary::failed(name, e);
            }
        }
    };
    if let Err(e) = write_file_outputs(output_dir, &base, &results) {
        warn!("{name}: writing outputs: {e}");
        return FileSummary::failed(name, format!("writing outputs: {e}"));
    }
    let summary = FileSummary::from_results(name, &results);
    info!("{name}: {}/{} matched", summary.matched, summary.references);
    summary
}

/// Input files of a directory, sorted by name.
pub fn list_inputs(dir: &Path, format: InputFormat) -> std::io::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if !entry.file_type()?.is_file() {
            continue;
        }
        let hidden = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_none_or(|n| n.starts_with('.'));
        if hidden {
            continue;
        }
        if format == InputFormat::Auto && format.resolve(&path).is_none() {
            continue;
        }
        files.push(path);
    }
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub stats: AggregateStats,
    pub files: Vec<FileSummary>,
    /// Files skipped because the checkpoint already had them.
    pub skipped: usize,
    /// Files processed in this invocation.
    pub processed: usize,
    pub checkpoint_writes: Vec<usize>,
    pub compactions: usize,
    pub aborted: bool,
}

fn timestamp(clock: &dyn Clock) -> String {
    time::OffsetDateTime::from_unix_timestamp(clock.unix_seconds())
        .ok()
        .and_then(|t| t.format(&time::format_description::well_known::Rfc3339).ok())
        .unwrap_or_default()
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Processes every input file in `input_dir`, writing per-file CSVs,
/// `aggregate_stats.txt` and `report.html` into `output_dir`.
pub fn process_directory<S, P>(
    input_dir: &Path,
    output_dir: &Path,
    ctx: &MatchContext<'_, S, P>,
    cfg: &BatchConfig,
    params: &RunParameters,
) -> Result<RunReport, BatchError>
where
    S: CandidateSource + Sync + ?Sized,
    P: CitationParser + Sync + ?Sized,
{
    let files = list_inputs(input_dir, cfg.format).map_err(|source| BatchError::InputDir {
        path: input_dir.display().to_string(),
        source,
    })?;
    process_files(&files, output_dir, ctx, cfg, params)
}

/// Same as [`process_directory`] over an explicit, ordered file list.
/// Checkpoint keys are file names, so names must be distinct.
pub fn process_files<S, P>(
    files: &[PathBuf],
    output_dir: &Path,
    ctx: &MatchContext<'_, S, P>,
    cfg: &BatchConfig,
    params: &RunParameters,
) -> Result<RunReport, BatchError>
where
    S: CandidateSource + Sync + ?Sized,
    P: CitationParser + Sync + ?Sized,
{
    std::fs::create_dir_all(output_dir).map_err(|source| BatchError::OutputDir {
        path: output_dir.display().to_string(),
        source,
    })?;

    let mut checkpoint = match &cfg.checkpoint {
        Some(p) => Checkpoint::open(p, cfg.checkpoint_every, cfg.compress_every_batches)?,
        None => Checkpoint::in_memory(),
    };

    let pending: Vec<&PathBuf> = files
        .iter()
        .filter(|p| !checkpoint.is_complete(&file_name(p)))
        .collect();
    let skipped = files.len() - pending.len();
    if skipped > 0 {
        info!("resuming: {skipped} file(s) already done");
    }

    let mut processed = 0usize;
    let batch_size = cfg.batch_size.max(1);
    for (index, batch) in pending.chunks(batch_size).enumerate() {
        if index > 0 && !cfg.batch_pause.is_zero() {
            info!("pausing {:.1}s between batches", cfg.batch_pause.as_secs_f64());
            ctx.clock.sleep(cfg.batch_pause);
        }
        ctx.pause_if_needed();

        let summaries: Vec<FileSummary> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .iter()
                .map(|path| {
                    scope.spawn(move || {
                        process_file(path, &file_name(path), output_dir, cfg.format, ctx, cfg.ref_concurrency)
                    })
                })
                .collect();
            handles
                .into_iter()
                .zip(batch.iter())
                .map(|(h, path)| {
                    h.join()
                        .unwrap_or_else(|_| FileSummary::failed(&file_name(path), "worker panicked"))
                })
                .collect()
        });

        for summary in summaries {
            checkpoint.record(summary, ctx.clock.unix_seconds())?;
            processed += 1;
            if cfg.abort_after_files.is_some_and(|n| processed >= n) {
                warn!("stopping after {processed} file(s) as requested");
                return Ok(RunReport {
                    stats: AggregateStats::default(),
                    files: Vec::new(),
                    skipped,
                    processed,
                    checkpoint_writes: checkpoint.writes().to_vec(),
                    compactions: checkpoint.compactions(),
                    aborted: true,
                });
            }
        }
        checkpoint.end_batch()?;
    }
    checkpoint.flush()?;

    let summaries: Vec<FileSummary> = files
        .iter()
        .filter_map(|p| checkpoint.entry(&file_name(p)).map(|e| e.summary.clone()))
        .collect();
    let stats = AggregateStats::from_summaries(&summaries);
    if let Err(e) = write_stats_txt(&stats, params, &output_dir.join(STATS_FILE)) {
        warn!("writing {STATS_FILE}: {e}");
    }
    let generated_at = cfg.generated_at.clone().unwrap_or_else(|| timestamp(ctx.clock));
    if let Err(e) = write_html_report(&stats, &summaries, params, &generated_at, &output_dir.join(HTML_FILE)) {
        warn!("writing {HTML_FILE}: {e}");
    }
    info!(
        "run complete: {} file(s), {} processed now, {}/{} references matched",
        stats.total_files_attempted, processed, stats.references_matched, stats.references_total
    );
    Ok(RunReport {
        stats,
        files: summaries,
        skipped,
        processed,
        checkpoint_writes: checkpoint.writes().to_vec(),
        compactions: checkpoint.compactions(),
        aborted: false,
    })
}
