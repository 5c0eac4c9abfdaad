//! Resumable record of which input files a run has finished.
//!
//! The journal at `path` holds one JSON object per line and is rewritten
//! atomically. Compaction moves everything into a gzip snapshot at
//! `path.gz` and empties the journal. Loading reads the snapshot first, then
//! the journal; later records win.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::atomic_write;
use crate::report::{FileOutcome, FileSummary};

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("corrupt checkpoint {path} line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub path: String,
    pub outcome: FileOutcome,
    pub timestamp: i64,
    pub summary: FileSummary,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    path: Option<PathBuf>,
    entries: BTreeMap<String, CheckpointEntry>,
    journal: Vec<CheckpointEntry>,
    every_files: usize,
    every_batches: usize,
    files_since_write: usize,
    batches_since_compress: usize,
    recorded: usize,
    writes: Vec<usize>,
    compactions: usize,
}

pub fn snapshot_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".gz");
    PathBuf::from(name)
}

fn parse_lines(reader: impl Read, origin: &Path) -> Result<Vec<CheckpointEntry>, CheckpointError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(io_err(origin))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| CheckpointError::Corrupt {
            path: origin.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

fn to_lines<'a>(entries: impl IntoIterator<Item = &'a CheckpointEntry>) -> Vec<u8> {
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e).expect("checkpoint entries serialize");
        out.push(b'\n');
    }
    out
}

impl Checkpoint {
    /// Checkpoint that is never written to disk.
    pub fn in_memory() -> Self {
        Checkpoint {
            path: None,
            entries: BTreeMap::new(),
            journal: Vec::new(),
            every_files: 10,
            every_batches: 10,
            files_since_write: 0,
            batches_since_compress: 0,
            recorded: 0,
            writes: Vec::new(),
            compactions: 0,
        }
    }

    /// Loads existing state from `path` (and its snapshot) if present.
    pub fn open(path: &Path, every_files: usize, every_batches: usize) -> Result<Self, CheckpointError> {
        let mut cp = Checkpoint::in_memory();
        cp.path = Some(path.to_path_buf());
        cp.every_files = every_files.max(1);
        cp.every_batches = every_batches.max(1);

        let snap = snapshot_path(path);
        if snap.exists() {
            let file = std::fs::File::open(&snap).map_err(io_err(&snap))?;
            for e in parse_lines(GzDecoder::new(file), &snap)? {
                cp.entries.insert(e.path.clone(), e);
            }
        }
        if path.exists() {
            let file = std::fs::File::open(path).map_err(io_err(path))?;
            for e in parse_lines(file, path)? {
                cp.entries.insert(e.path.clone(), e.clone());
                cp.journal.push(e);
            }
        }
        if !cp.entries.is_empty() {
            info!("checkpoint {}: {} file(s) on record", path.display(), cp.entries.len());
        }
        Ok(cp)
    }

    pub fn entry(&self, file: &str) -> Option<&CheckpointEntry> {
        self.entries.get(file)
    }

    /// Finished files are skipped on resume; errored ones are retried.
    pub fn is_complete(&self, file: &str) -> bool {
        self.entries
            .get(file)
            .is_some_and(|e| matches!(e.outcome, FileOutcome::Done | FileOutcome::Empty))
    }

    pub fn entries(&self) -> impl Iterator<Item = &CheckpointEntry> {
        self.entries.values()
    }

    /// Number of files recorded so far in this session at each disk write.
    pub fn writes(&self) -> &[usize] {
        &self.writes
    }

    pub fn compactions(&self) -> usize {
        self.compactions
    }

    /// Records a finished file; writes the journal every `every_files` files.
    pub fn record(&mut self, summary: FileSummary, timestamp: i64) -> Result<bool, CheckpointError> {
        let entry = CheckpointEntry {
            path: summary.path.clone(),
            outcome: summary.outcome,
            timestamp,
            summary,
        };
        self.entries.insert(entry.path.clone(), entry.clone());
        self.journal.push(entry);
        self.recorded += 1;
        self.files_since_write += 1;
        if self.files_since_write >= self.every_files {
            self.flush()?;
            return Ok(true);
        }
        Ok(false)
    }

    /// Marks a batch boundary; compacts every `every_batches` batches.
    pub fn end_batch(&mut self) -> Result<bool, CheckpointError> {
        self.batches_since_compress += 1;
        if self.batches_since_compress >= self.every_batches {
            self.batches_since_compress = 0;
            self.compact()?;
            return Ok(true);
        }
        Ok(false)
    }

    /// Writes the journal if anything was recorded since the last write.
    pub fn flush(&mut self) -> Result<(), CheckpointError> {
        if self.files_since_write == 0 {
            return Ok(());
        }
        self.files_since_write = 0;
        let Some(path) = &self.path else {
            return Ok(());
        };
        atomic_write(path, &to_lines(&self.journal)).map_err(io_err(path))?;
        self.writes.push(self.recorded);
        debug!("checkpoint written after {} file(s)", self.recorded);
        Ok(())
    }

    /// Folds everything into the gzip snapshot and empties the journal.
    pub fn compact(&mut self) -> Result<(), CheckpointError> {
        let Some(path) = self.path.clone() else {
            return Ok(());
        };
        // The journal must be current before it is dropped.
        self.flush()?;
        let snap = snapshot_path(&path);
        let mut gz = GzEncoder::new(Vec::new(), Compression::default());
        gz.write_all(&to_lines(self.entries.values())).map_err(io_err(&snap))?;
        let bytes = gz.finish().map_err(io_err(&snap))?;
        atomic_write(&snap, &bytes).map_err(io_err(&snap))?;
        self.journal.clear();
        atomic_write(&path, b"").map_err(io_err(&path))?;
        self.compactions += 1;
        info!("checkpoint compacted: {} file(s) in {}", self.entries.len(), snap.display());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(path: &str, outcome: FileOutcome) -> FileSummary {
        let mut s = FileSummary::from_results(path, &[]);
        s.outcome = outcome;
        s
    }

    #[test]
    fn writes_every_n_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cp.jsonl");
        let mut cp = Checkpoint::open(&p, 10, 10).unwrap();
        for i in 0..25 {
            cp.record(summary(&format!("f{i:02}.json"), FileOutcome::Done), i).unwrap();
        }
        assert_eq!(cp.writes(), &[10, 20]);
        let again = Checkpoint::open(&p, 10, 10).unwrap();
        assert_eq!(again.entries().count(), 20);
        assert!(again.is_complete("f19.json"));
        assert!(!again.is_complete("f20.json"));
    }

    #[test]
    fn errors_are_retried() {
        let mut cp = Checkpoint::in_memory();
        cp.record(summary("a.json", FileOutcome::Error), 0).unwrap();
        cp.record(summary("b.json", FileOutcome::Empty), 0).unwrap();
        assert!(!cp.is_complete("a.json"));
        assert!(cp.is_complete("b.json"));
    }

    #[test]
    fn compaction_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cp.jsonl");
        let mut cp = Checkpoint::open(&p, 1, 2).unwrap();
        cp.record(summary("a.json", FileOutcome::Done), 1).unwrap();
        assert!(!cp.end_batch().unwrap());
        cp.record(summary("b.json", FileOutcome::Done), 2).unwrap();
        assert!(cp.end_batch().unwrap());
        assert_eq!(std::fs::read(&p).unwrap(), b"");
        assert!(snapshot_path(&p).exists());
        cp.record(summary("c.json", FileOutcome::Empty), 3).unwrap();
        let again = Checkpoint::open(&p, 1, 2).unwrap();
        let names: Vec<&str> = again.entries().map(|e| e.path.as_str()).collect();
        assert_eq!(names, ["a.json", "b.json", "c.json"]);
    }

    #[test]
    fn corrupt_journal_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cp.jsonl");
        std::fs::write(&p, "{not json\n").unwrap();
        assert!(matches!(Checkpoint::open(&p, 10, 10), Err(CheckpointError::Corrupt { line: 1, .. })));
    }
}
