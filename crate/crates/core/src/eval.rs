//! MAP / MRR scoring of reranked candidate lists against gold relevance labels.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::ScoredRanking;

/// Ranks considered by AP and RR.
pub const CUTOFF: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    PerfectMatch,
    Relevant,
    Irrelevant,
}

impl Label {
    pub fn is_relevant(self) -> bool {
        matches!(self, Label::PerfectMatch | Label::Relevant)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::PerfectMatch => "PerfectMatch",
            Label::Relevant => "Relevant",
            Label::Irrelevant => "Irrelevant",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "PerfectMatch" => Ok(Label::PerfectMatch),
            "Relevant" => Ok(Label::Relevant),
            "Irrelevant" => Ok(Label::Irrelevant),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Sum of precision at each relevant position within `cutoff`, divided by the
/// number of relevant entries in the whole list. Zero when nothing is relevant.
pub fn average_precision(ranked: &[bool], cutoff: usize) -> f64 {
    let total = ranked.iter().filter(|&&r| r).count();
    if total == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, _) in ranked.iter().take(cutoff).enumerate().filter(|(_, &r)| r) {
        hits += 1;
        sum += hits as f64 / (k + 1) as f64;
    }
    sum / total as f64
}

/// `1/k` for the first relevant position `k` within `cutoff`, else zero.
pub fn reciprocal_rank(ranked: &[bool], cutoff: usize) -> f64 {
    ranked
        .iter()
        .take(cutoff)
        .position(|&r| r)
        .map_or(0.0, |k| 1.0 / (k + 1) as f64)
}

/// Relevance labels keyed by `(query_id, cand_id)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldLabels {
    labels: HashMap<(String, String), Label>,
}

impl GoldLabels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, cand_id: impl Into<String>, label: Label) {
        self.labels.insert((query_id.into(), cand_id.into()), label);
    }

    pub fn get(&self, query_id: &str, cand_id: &str) -> Option<Label> {
        self.labels
            .get(&(query_id.to_string(), cand_id.to_string()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Entries sorted by query id then candidate id.
    pub fn entries(&self) -> Vec<(&str, &str, Label)> {
        let mut v: Vec<_> = self
            .labels
            .iter()
            .map(|((q, c), &l)| (q.as_str(), c.as_str(), l))
            .collect();
        v.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        v
    }

    /// Reads `query_id<TAB>cand_id<TAB>label` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut gold = Self::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [q, c, l] = fields[..] else {
                return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            };
            let label = l.trim().parse().map_err(err)?;
            if gold.labels.insert((q.to_string(), c.to_string()), label).is_some() {
                return Err(err(format!("duplicate label for {q}/{c}")));
            }
        }
        Ok(gold)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (q, c, l) in self.entries() {
            writeln!(w, "{q}\t{c}\t{l}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryMetrics {
    pub query_id: String,
    pub average_precision: f64,
    pub reciprocal_rank: f64,
    pub relevant: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Mean AP as a fraction in [0, 1].
    pub map: f64,
    /// Mean RR as a fraction in [0, 1].
    pub mrr: f64,
    /// Per-query diagnostics, sorted by query id.
    pub per_query: Vec<QueryMetrics>,
    pub zero_relevant: usize,
}

impl EvalReport {
    pub fn map_percent(&self) -> f64 {
        round2(self.map * 100.0)
    }

    pub fn mrr_percent(&self) -> f64 {
        round2(self.mrr * 100.0)
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "MAP\t{:.2}", self.map * 100.0)?;
        writeln!(f, "MRR\t{:.2}", self.mrr * 100.0)?;
        writeln!(f, "queries\t{}", self.per_query.len())?;
        writeln!(f, "zero_relevant_queries\t{}", self.zero_relevant)
    }
}

/// Scores every ranking against `gold`. Rankings are grouped by query id, so
/// their order in `predictions` does not matter.
pub fn evaluate(predictions: &[ScoredRanking], gold: &GoldLabels) -> Result<EvalReport> {
    let mut by_query: BTreeMap<&str, &ScoredRanking> = BTreeMap::new();
    for r in predictions {
        if by_query.insert(r.query_id.as_str(), r).is_some() {
            return Err(Error::InvalidArgument(format!(
                "query {} appears more than once in predictions",
                r.query_id
            )));
        }
    }
    if by_query.is_empty() {
        return Err(Error::InvalidArgument("no predictions to evaluate".into()));
    }

    let mut missing = Vec::new();
    let mut per_query = Vec::with_capacity(by_query.len());
    for (qid, ranking) in by_query {
        let mut ranked = Vec::with_capacity(ranking.entries.len());
        for e in &ranking.entries {
            match gold.get(qid, &e.cand_id) {
                Some(l) => ranked.push(l.is_relevant()),
                None => missing.push(format!("{qid}/{}", e.cand_id)),
            }
        }
        per_query.push(QueryMetrics {
            query_id: qid.to_string(),
            average_precision: average_precision(&ranked, CUTOFF),
            reciprocal_rank: reciprocal_rank(&ranked, CUTOFF),
            relevant: ranked.iter().filter(|&&r| r).count(),
        });
    }
    if !missing.is_empty() {
        return Err(Error::MissingGold(missing));
    }

    let n = per_query.len() as f64;
    Ok(EvalReport {
        map: per_query.iter().map(|q| q.average_precision).sum::<f64>() / n,
        mrr: per_query.iter().map(|q| q.reciprocal_rank).sum::<f64>() / n,
        zero_relevant: per_query.iter().filter(|q| q.relevant == 0).count(),
        per_query,
    })
}
