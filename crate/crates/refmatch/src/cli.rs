//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use refmatch_core::{normalize_doi, MatchConfig};

use crate::batch::{process_directory, process_files, BatchConfig, MatchContext};
use crate::clock::{current_year, Clock, SystemClock};
use crate::evaluate;
use crate::fixture::load_store;
use crate::ingest::{fetch_crossref_raw, IngestError, InputFormat, DEFAULT_CROSSREF_BASE};
use crate::netguard::{GuardConfig, NetGuard, ReqwestTransport};
use crate::parser::{AnyParser, GrobidParser, StubParser};
use crate::report::RunParameters;
use crate::sparql::{SparqlStore, DEFAULT_ENDPOINT};
use crate::store::AnyStore;

#[derive(Debug, Parser)]
#[command(name = "refmatch", version, about = "Match bibliographic references against a knowledge base")]
pub struct Cli {
    /// Log filter (error, warn, info, debug, trace); RUST_LOG overrides.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Match the references of one file or a directory of files.
    Match(MatchArgs),
    /// Download Crossref records by DOI as JSON files.
    Fetch(FetchArgs),
    /// Evaluate matches against DOI ground truth.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
}

#[derive(Debug, Clone, Args)]
pub struct NetArgs {
    /// Requests per second admitted by the rate limiter.
    #[arg(long, default_value_t = 2.5)]
    pub rate: f64,
    /// Token bucket capacity.
    #[arg(long, default_value_t = 10.0)]
    pub burst: f64,
    /// Maximum concurrent HTTP requests.
    #[arg(long, default_value_t = 10)]
    pub max_in_flight: usize,
    /// HTTP timeout in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
}

#[derive(Debug, Clone, Args)]
pub struct StoreArgs {
    /// SPARQL endpoint of the bibliographic store.
    #[arg(long, env = "SPARQL_ENDPOINT", default_value = DEFAULT_ENDPOINT)]
    pub sparql_endpoint: String,
    /// Use a local CSV fixture instead of the SPARQL endpoint.
    #[arg(long)]
    pub fixture_store: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    /// Input file or directory.
    #[arg(long, visible_alias = "input-dir")]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value = "auto")]
    pub format: InputFormat,
    #[arg(long, default_value_t = 3)]
    pub batch_size: usize,
    /// Seconds between batches.
    #[arg(long, default_value_t = 10.0)]
    pub batch_pause: f64,
    #[arg(long, default_value_t = 10)]
    pub ref_concurrency: usize,
    /// Defaults to `checkpoint.jsonl` in the output directory.
    #[arg(long)]
    pub checkpoint_file: Option<PathBuf>,
    /// Consecutive server errors before a pause.
    #[arg(long, default_value_t = 10)]
    pub error_threshold: u32,
    /// Seconds to pause once the error threshold is reached.
    #[arg(long, default_value_t = 300.0)]
    pub error_pause: f64,
    #[arg(long, default_value_t = 26)]
    pub threshold: u32,
    /// Run the DOI-based tiers.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub use_doi: bool,
    #[arg(long, default_value_t = 50)]
    pub candidate_limit: usize,
    /// Citation parsing service root (e.g. http://localhost:8070). The
    /// offline stub parser is used when absent.
    #[arg(long, env = "PARSER_ENDPOINT")]
    pub parser_endpoint: Option<String>,
    /// Disable the enrichment fallback entirely.
    #[arg(long, conflicts_with = "parser_endpoint")]
    pub no_parser: bool,
    /// Calendar year used for year validation; defaults to today's.
    #[arg(long)]
    pub current_year: Option<i32>,
    #[command(flatten)]
    pub store: StoreArgs,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FetchArgs {
    #[arg(long = "doi")]
    pub dois: Vec<String>,
    /// File with one DOI per line.
    #[arg(long)]
    pub doi_file: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, env = "CROSSREF_BASE_URL", default_value = DEFAULT_CROSSREF_BASE)]
    pub crossref_base_url: String,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Debug, Subcommand)]
pub enum EvaluateCommand {
    /// Verify reference DOIs of Crossref JSON files against the store.
    CheckDoi {
        #[arg(long)]
        json_dir: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        net: NetArgs,
    },
    /// List DOIs missed and earned by the matcher.
    Compare {
        #[arg(long)]
        doi_results_dir: PathBuf,
        #[arg(long)]
        matches_dir: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Precision, recall, F1 and accuracy over all file pairs.
    Metrics {
        #[arg(long)]
        check_doi_dir: PathBuf,
        #[arg(long)]
        matches_dir: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
    },
}

const EXIT_OK: i32 = 0;
const EXIT_FAILURE: i32 = 1;
const EXIT_USAGE: i32 = 2;

fn usage(message: &str) -> i32 {
    eprintln!("error: {message}\n\nFor more information, try '--help'.");
    EXIT_USAGE
}

fn init_logging(level: &str) {
    let env = env_logger::Env::default().default_filter_or(level);
    let _ = env_logger::Builder::from_env(env).format_timestamp_secs().try_init();
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(&cli.log_level);
    match cli.command {
        Command::Match(args) => run_match(&args),
        Command::Fetch(args) => run_fetch(&args),
        Command::Evaluate(cmd) => run_evaluate(cmd),
    }
}

fn positive(value: f64, name: &str) -> Result<f64, String> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(format!("--{name} must be a positive number"))
    }
}

fn non_negative_secs(value: f64, name: &str) -> Result<Duration, String> {
    if value.is_finite() && value >= 0.0 {
        Ok(Duration::from_secs_f64(value))
    } else {
        Err(format!("--{name} must be a non-negative number of seconds"))
    }
}

fn guard(net: &NetArgs, clock: Arc<dyn Clock>) -> Result<NetGuard, String> {
    let rate = positive(net.rate, "rate")?;
    let burst = positive(net.burst, "burst")?;
    let timeout = non_negative_secs(net.timeout, "timeout")?;
    let transport = ReqwestTransport::new(timeout).map_err(|e| e.0)?;
    let config = GuardConfig {
        rate,
        burst,
        max_in_flight: net.max_in_flight.max(1),
        ..GuardConfig::default()
    };
    Ok(NetGuard::new(Arc::new(transport), clock, config))
}

fn open_store(args: &StoreArgs, net: &NetArgs, clock: Arc<dyn Clock>) -> Result<(AnyStore, String, Option<Arc<NetGuard>>), String> {
    match &args.fixture_store {
        Some(path) => {
            let store = load_store(path).map_err(|e| format!("{}: {e}", path.display()))?;
            info!("fixture store {} with {} record(s)", path.display(), store.len());
            Ok((AnyStore::Memory(store), format!("fixture:{}", path.display()), None))
        }
        None => {
            let g = Arc::new(guard(net, clock)?);
            let store = SparqlStore::new(args.sparql_endpoint.clone(), Arc::clone(&g));
            Ok((AnyStore::Sparql(store), args.sparql_endpoint.clone(), Some(g)))
        }
    }
}

fn run_match(args: &MatchArgs) -> i32 {
    if !args.input.exists() {
        return usage(&format!("input {} does not exist", args.input.display()));
    }
    if args.threshold == 0 {
        return usage("--threshold must be at least 1");
    }
    if args.batch_size == 0 || args.ref_concurrency == 0 || args.candidate_limit == 0 {
        return usage("--batch-size, --ref-concurrency and --candidate-limit must be at least 1");
    }
    let (batch_pause, error_pause) = match (
        non_negative_secs(args.batch_pause, "batch-pause"),
        non_negative_secs(args.error_pause, "error-pause"),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return usage(&e),
    };

    let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
    let (store, store_label, store_guard) = match open_store(&args.store, &args.net, Arc::clone(&clock)) {
        Ok(s) => s,
        Err(e) => return usage(&e),
    };
    let year = args.current_year.unwrap_or_else(current_year);
    let (parser, parser_label) = if args.no_parser {
        (None, "none".to_string())
    } else if let Some(endpoint) = &args.parser_endpoint {
        let g = match guard(&args.net, Arc::clone(&clock)) {
            Ok(g) => g,
            Err(e) => return usage(&e),
        };
        (
            Some(AnyParser::Grobid(GrobidParser::new(endpoint, Arc::new(g), year))),
            endpoint.clone(),
        )
    } else {
        (Some(AnyParser::Stub(StubParser::new(year))), "stub".to_string())
    };

    let config = MatchConfig {
        threshold: args.threshold,
        use_doi: args.use_doi,
        candidate_limit: args.candidate_limit,
        ..MatchConfig::for_year(year)
    };
    let ctx = MatchContext {
        store: &store,
        parser: parser.as_ref(),
        config,
        clock: clock.as_ref(),
        errors: store_guard.as_ref().map(|g| g.error_counter()),
        error_threshold: args.error_threshold,
        error_pause,
    };
    let batch = BatchConfig {
        format: args.format,
        batch_size: args.batch_size,
        batch_pause,
        ref_concurrency: args.ref_concurrency,
        checkpoint: Some(
            args.checkpoint_file
                .clone()
                .unwrap_or_else(|| args.output_dir.join("checkpoint.jsonl")),
        ),
        error_threshold: args.error_threshold,
        error_pause,
        ..BatchConfig::default()
    };
    let params = RunParameters {
        threshold: args.threshold,
        use_doi: args.use_doi,
        candidate_limit: args.candidate_limit,
        rate: args.net.rate,
        burst: args.net.burst,
        batch_size: args.batch_size,
        batch_pause_secs: args.batch_pause,
        ref_concurrency: args.ref_concurrency,
        error_threshold: args.error_threshold,
        store: store_label,
        parser: parser_label,
    };

    let result = if args.input.is_dir() {
        process_directory(&args.input, &args.output_dir, &ctx, &batch, &params)
    } else {
        process_files(&[args.input.clone()], &args.output_dir, &ctx, &batch, &params)
    };
    match result {
        Ok(report) => {
            let s = &report.stats;
            let rate = s
                .match_rate()
                .map(|r| format!("{:.2}%", r * 100.0))
                .unwrap_or_else(|| "n/a".to_string());
            println!(
                "files: {} attempted, {} processed, {} empty, {} with errors",
                s.total_files_attempted, s.files_processed, s.empty_files, s.files_with_errors
            );
            println!("references: {}/{} matched ({rate})", s.references_matched, s.references_total);
            EXIT_OK
        }
        Err(e) => {
            error!("{e}");
            EXIT_FAILURE
        }
    }
}

/// File name for a DOI's record: unsafe characters become `_`.
pub fn doi_file_name(doi: &str) -> String {
    let safe: String = doi
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-') { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

fn run_fetch(args: &FetchArgs) -> i32 {
    let mut dois: Vec<String> = args.dois.clone();
    if let Some(path) = &args.doi_file {
        match std::fs::read_to_string(path) {
            Ok(text) => dois.extend(text.lines().map(str::to_string)),
            Err(e) => return usage(&format!("{}: {e}", path.display())),
        }
    }
    let dois: Vec<String> = dois
        .iter()
        .map(|d| normalize_doi(d))
        .filter(|d| !d.is_empty())
        .collect();
    if dois.is_empty() {
        return usage("no DOIs given (use --doi or --doi-file)");
    }
    let g = match guard(&args.net, Arc::new(SystemClock::new())) {
        Ok(g) => g,
        Err(e) => return usage(&e),
    };
    if let Err(e) = std::fs::create_dir_all(&args.output_dir) {
        error!("{}: {e}", args.output_dir.display());
        return EXIT_FAILURE;
    }
    let written = fetch_all(&dois, &g, &args.crossref_base_url, &args.output_dir);
    println!("{written} of {} record(s) written", dois.len());
    if written > 0 {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

/// Fetches each DOI and writes `<doi>.json`; returns how many were written.
pub fn fetch_all(dois: &[String], guard: &NetGuard, base: &str, output_dir: &Path) -> usize {
    let mut written = 0;
    for doi in dois {
        match fetch_crossref_raw(doi, guard, base) {
            Ok((body, work)) => {
                let path = output_dir.join(doi_file_name(doi));
                match crate::fsutil::atomic_write(&path, &body) {
                    Ok(()) => {
                        info!("{doi}: {} reference(s) -> {}", work.references.len(), path.display());
                        written += 1;
                    }
                    Err(e) => error!("{}: {e}", path.display()),
                }
            }
            Err(IngestError::NotFound(_)) => warn!("{doi}: not found, skipped"),
            Err(e) => warn!("{doi}: {e}, skipped"),
        }
    }
    written
}

fn fmt_ratio(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".to_string())
}

fn run_evaluate(cmd: EvaluateCommand) -> i32 {
    match cmd {
        EvaluateCommand::CheckDoi { json_dir, output_dir, store, net } => {
            if !json_dir.is_dir() {
                return usage(&format!("{} is not a directory", json_dir.display()));
            }
            let (store, _, _) = match open_store(&store, &net, Arc::new(SystemClock::new())) {
                Ok(s) => s,
                Err(e) => return usage(&e),
            };
            match evaluate::check_doi(&json_dir, &output_dir, &store) {
                Ok(files) => {
                    let total: u64 = files.iter().map(|f| f.total_queries).sum();
                    let found: u64 = files.iter().map(|f| f.successful_queries).sum();
                    let failed = files.iter().filter(|f| f.error.is_some()).count();
                    println!("{} file(s): {found}/{total} DOIs found, {failed} file(s) failed", files.len());
                    EXIT_OK
                }
                Err(e) => {
                    error!("{e}");
                    EXIT_FAILURE
                }
            }
        }
        EvaluateCommand::Compare { doi_results_dir, matches_dir, output_dir } => {
            for d in [&doi_results_dir, &matches_dir] {
                if !d.is_dir() {
                    return usage(&format!("{} is not a directory", d.display()));
                }
            }
            match evaluate::compare(&doi_results_dir, &matches_dir, &output_dir) {
                Ok(c) => {
                    println!("{} missed, {} earned", c.missed.len(), c.earned.len());
                    EXIT_OK
                }
                Err(e) => {
                    error!("{e}");
                    EXIT_FAILURE
                }
            }
        }
        EvaluateCommand::Metrics { check_doi_dir, matches_dir, output_dir } => {
            for d in [&check_doi_dir, &matches_dir] {
                if !d.is_dir() {
                    return usage(&format!("{} is not a directory", d.display()));
                }
            }
            match evaluate::metrics(&check_doi_dir, &matches_dir, &output_dir) {
                Ok(r) => {
                    let c = r.overall;
                    println!("tp {} fp {} fn {} tn {}", c.tp, c.fp, c.fn_, c.tn);
                    println!("precision {}", fmt_ratio(c.precision()));
                    println!("recall {}", fmt_ratio(c.recall()));
                    println!("f1 {}", fmt_ratio(c.f1()));
                    println!("accuracy {}", fmt_ratio(c.accuracy()));
                    EXIT_OK
                }
                Err(e) => {
                    error!("{e}");
                    EXIT_FAILURE
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let cli = Cli::try_parse_from(["refmatch", "match", "--input", "x", "--output-dir", "y"]).unwrap();
        let Command::Match(m) = cli.command else { panic!() };
        assert_eq!(m.threshold, 26);
        assert_eq!(m.batch_size, 3);
        assert_eq!(m.batch_pause, 10.0);
        assert_eq!(m.ref_concurrency, 10);
        assert_eq!(m.error_threshold, 10);
        assert_eq!(m.candidate_limit, 50);
        assert!(m.use_doi);
        assert_eq!(m.net.rate, 2.5);
        assert_eq!(m.net.burst, 10.0);
    }

    #[test]
    fn use_doi_takes_a_value() {
        let cli = Cli::try_parse_from(["refmatch", "match", "--input", "x", "--output-dir", "y", "--use-doi", "false"]).unwrap();
        let Command::Match(m) = cli.command else { panic!() };
        assert!(!m.use_doi);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with_args(["refmatch", "match"]), 2);
        assert_eq!(main_with_args(["refmatch", "match", "--input", "/nonexistent/dir", "--output-dir", "/tmp/x"]), 2);
        assert_eq!(main_with_args(["refmatch", "fetch", "--output-dir", "/tmp/x"]), 2);
    }

    #[test]
    fn doi_file_names_are_safe() {
        assert_eq!(doi_file_name("10.1162/qss_a_00112"), "10.1162_qss_a_00112.json");
    }
}
