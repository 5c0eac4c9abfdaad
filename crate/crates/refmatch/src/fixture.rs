//! CSV fixture files for the in-memory store.
//!
//! One record per line with the header
//! `meta_id,doi,title,surname,year,volume,first_page,last_page`. Empty cells
//! are absent values.

use std::io::{Read, Write};
use std::path::Path;

use refmatch_core::{Candidate, MemoryStore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("reading fixture: {0}")]
    Csv(#[from] csv::Error),
    #[error("fixture line {line}: {message}")]
    Invalid { line: u64, message: String },
    #[error("{0}")]
    Store(String),
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Row {
    meta_id: String,
    #[serde(default)]
    doi: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    surname: String,
    #[serde(default)]
    year: String,
    #[serde(default)]
    volume: String,
    #[serde(default)]
    first_page: String,
    #[serde(default)]
    last_page: String,
}

fn opt(s: String) -> Option<String> {
    (!s.trim().is_empty()).then_some(s)
}

pub fn read_records(reader: impl Read) -> Result<Vec<Candidate>, FixtureError> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in csv.deserialize::<Row>().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let year = match row.year.trim() {
            "" => None,
            y => Some(y.parse::<i32>().map_err(|_| FixtureError::Invalid {
                line,
                message: format!("year {y:?} is not an integer"),
            })?),
        };
        if row.meta_id.trim().is_empty() {
            return Err(FixtureError::Invalid { line, message: "empty meta_id".to_string() });
        }
        out.push(
            Candidate {
                meta_id: row.meta_id.trim().to_string(),
                doi: opt(row.doi),
                title: opt(row.title),
                first_author_surname: opt(row.surname),
                year,
                volume: opt(row.volume),
                first_page: opt(row.first_page),
                last_page: opt(row.last_page),
            }
            .sanitized(),
        );
    }
    Ok(out)
}

pub fn write_records(writer: impl Write, records: &[Candidate]) -> Result<(), FixtureError> {
    let mut csv = csv::Writer::from_writer(writer);
    let s = |v: &Option<String>| v.clone().unwrap_or_default();
    for c in records {
        csv.serialize(Row {
            meta_id: c.meta_id.clone(),
            doi: s(&c.doi),
            title: s(&c.title),
            surname: s(&c.first_author_surname),
            year: c.year.map(|y| y.to_string()).unwrap_or_default(),
            volume: s(&c.volume),
            first_page: s(&c.first_page),
            last_page: s(&c.last_page),
        })?;
    }
    if records.is_empty() {
        csv.write_record(["meta_id", "doi", "title", "surname", "year", "volume", "first_page", "last_page"])?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn load_store(path: &Path) -> Result<MemoryStore, FixtureError> {
    let file = std::fs::File::open(path).map_err(csv::Error::from)?;
    let records = read_records(file)?;
    MemoryStore::from_records(records).map_err(|e| FixtureError::Store(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut a = Candidate::new("omid:br/1");
        a.title = Some("Science, \"of\" science".to_string());
        a.year = Some(2016);
        a.doi = Some("10.1/x".to_string());
        let b = Candidate::new("omid:br/2");
        let mut buf = Vec::new();
        write_records(&mut buf, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(read_records(buf.as_slice()).unwrap(), vec![a, b]);
    }

    #[test]
    fn header_only_and_bad_year() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[]).unwrap();
        assert!(read_records(buf.as_slice()).unwrap().is_empty());
        let bad = "meta_id,doi,title,surname,year,volume,first_page,last_page\nomid:br/1,,,,20x9,,,\n";
        assert!(matches!(read_records(bad.as_bytes()), Err(FixtureError::Invalid { line: 2, .. })));
    }
}
