//! Line-delimited JSON readers for the unlabeled corpus and query/candidate files.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Label;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawQuestion {
    pub id: String,
    #[serde(default)]
    pub subject: String,
    #[serde(default)]
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub cand_id: String,
    #[serde(default)]
    pub subject: String,
    #[serde(default)]
    pub body: String,
    pub initial_rank: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    #[serde(default)]
    pub subject: String,
    #[serde(default)]
    pub body: String,
    pub candidates: Vec<CandidateRecord>,
}

pub const MAX_CANDIDATES: usize = 10;

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        out.push((idx + 1, rec));
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `{"id", "subject", "body"}` records; ids must be non-empty and unique.
pub fn read_corpus(path: &Path) -> Result<Vec<RawQuestion>> {
    let records: Vec<(usize, RawQuestion)> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (line, q) in records {
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if q.id.is_empty() {
            return Err(err("empty id".into()));
        }
        if !seen.insert(q.id.clone()) {
            return Err(err(format!("duplicate id {:?}", q.id)));
        }
        out.push(q);
    }
    Ok(out)
}

fn validate_query(q: &QueryRecord) -> std::result::Result<(), String> {
    if q.query_id.is_empty() {
        return Err("empty query_id".into());
    }
    if q.candidates.len() > MAX_CANDIDATES {
        return Err(format!(
            "query {:?} has {} candidates (max {MAX_CANDIDATES})",
            q.query_id,
            q.candidates.len()
        ));
    }
    let mut ids = HashSet::new();
    let mut ranks = HashSet::new();
    for c in &q.candidates {
        if c.cand_id.is_empty() {
            return Err(format!("query {:?}: empty cand_id", q.query_id));
        }
        if !ids.insert(&c.cand_id) {
            return Err(format!("query {:?}: duplicate cand_id {:?}", q.query_id, c.cand_id));
        }
        if !(1..=MAX_CANDIDATES as u32).contains(&c.initial_rank) {
            return Err(format!(
                "query {:?}: candidate {:?} has initial_rank {} outside 1..=10",
                q.query_id, c.cand_id, c.initial_rank
            ));
        }
        if !ranks.insert(c.initial_rank) {
            return Err(format!(
                "query {:?}: duplicate initial_rank {}",
                q.query_id, c.initial_rank
            ));
        }
    }
    Ok(())
}

/// Reads query records, each with up to ten candidates carrying distinct ranks in `1..=10`.
pub fn read_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let records: Vec<(usize, QueryRecord)> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (line, q) in records {
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        validate_query(&q).map_err(err)?;
        if !seen.insert(q.query_id.clone()) {
            return Err(err(format!("duplicate query_id {:?}", q.query_id)));
        }
        out.push(q);
    }
    Ok(out)
}

pub fn write_queries(path: &Path, queries: &[QueryRecord]) -> Result<()> {
    write_jsonl(path, queries)
}
