use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::vocab::{count_tokens, sorted_by_count};
use super::{RawQuestion, TokenSequence};
use crate::error::{Error, Result};

/// Corpus term frequencies `tf(w|C)` with additive smoothing applied at lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermStats {
    counts: HashMap<String, u64>,
    total: u64,
    smoothing: u64,
}

impl TermStats {
    pub const DEFAULT_SMOOTHING: u64 = 1;

    pub fn from_counts(counts: HashMap<String, u64>) -> Self {
        let total = counts.values().sum();
        Self {
            counts,
            total,
            smoothing: Self::DEFAULT_SMOOTHING,
        }
    }

    pub fn with_smoothing(mut self, smoothing: u64) -> Self {
        self.smoothing = smoothing;
        self
    }

    pub fn smoothing(&self) -> u64 {
        self.smoothing
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn raw_count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    /// Smoothed count used by word importance.
    pub fn lookup(&self, word: &str) -> u64 {
        self.raw_count(word) + self.smoothing
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `word<TAB>count` lines, descending count then lexicographic.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (word, count) in sorted_by_count(self.counts.clone()) {
            writeln!(w, "{word}\t{count}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut counts = HashMap::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let parse_err = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected word<TAB>count"))?;
            let count: u64 = count.parse().map_err(|_| parse_err("invalid count"))?;
            if counts.insert(word.to_string(), count).is_some() {
                return Err(parse_err("duplicate word"));
            }
        }
        Ok(Self::from_counts(counts))
    }
}

pub fn term_frequency_stats<'a>(corpus: impl IntoIterator<Item = &'a RawQuestion>) -> TermStats {
    TermStats::from_counts(count_tokens(corpus))
}

/// Normalized corpus frequency of each query word; smaller means more important.
pub fn word_importance(query: &TokenSequence, stats: &TermStats) -> Result<Vec<f64>> {
    if query.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let raw: Vec<u64> = query.tokens.iter().map(|t| stats.lookup(t)).collect();
    let sum: u64 = raw.iter().sum();
    if sum == 0 {
        return Err(Error::InvalidArgument(
            "all query words have zero frequency and smoothing is disabled".into(),
        ));
    }
    Ok(raw.into_iter().map(|c| c as f64 / sum as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Vocabulary;

    fn seq(words: &[&str]) -> TokenSequence {
        TokenSequence::from_tokens(words.iter().map(|s| s.to_string()).collect(), &Vocabulary::default())
    }

    pub(crate) fn fixture_counts() -> HashMap<String, u64> {
        [("we", 5401), ("propose", 75), ("an", 4221), ("unsupervised", 8), ("model", 295)]
            .into_iter()
            .map(|(w, c)| (w.to_string(), c))
            .collect()
    }

    #[test]
    fn direct_count_with_add_one() {
        let corpus = [RawQuestion {
            id: "1".into(),
            subject: String::new(),
            body: "a a b".into(),
        }];
        let s = term_frequency_stats(&corpus);
        assert_eq!(s.raw_count("a"), 2);
        assert_eq!(s.raw_count("b"), 1);
        assert_eq!(s.total(), 3);
        assert_eq!(s.lookup("a"), 3);
        assert_eq!(s.lookup("b"), 2);
        assert_eq!(s.lookup("unseen"), 1);
    }

    #[test]
    fn empty_corpus_lookups_are_smoothing() {
        let s = term_frequency_stats(std::iter::empty());
        assert_eq!(s.lookup("x"), 1);
        assert_eq!(s.total(), 0);
    }

    #[test]
    fn worked_example_importance() {
        let stats = TermStats::from_counts(fixture_counts()).with_smoothing(0);
        assert_eq!(stats.total(), 10000);
        let f = word_importance(&seq(&["we", "propose", "an", "unsupervised", "model"]), &stats)
            .unwrap();
        assert_eq!(f, vec![0.5401, 0.0075, 0.4221, 0.0008, 0.0295]);
    }

    #[test]
    fn symmetric_and_single_word() {
        let stats = TermStats::from_counts(HashMap::new());
        let f = word_importance(&seq(&["x", "y", "z", "w"]), &stats).unwrap();
        assert!(f.iter().all(|&v| v == 0.25));
        assert_eq!(word_importance(&seq(&["x"]), &stats).unwrap(), vec![1.0]);
    }

    #[test]
    fn empty_query_is_error() {
        let stats = TermStats::from_counts(HashMap::new());
        assert!(matches!(word_importance(&seq(&[]), &stats), Err(Error::EmptyQuery)));
    }

    #[test]
    fn save_load_roundtrip() {
        let stats = TermStats::from_counts(fixture_counts());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stats.tsv");
        stats.save(&p).unwrap();
        assert_eq!(TermStats::load(&p).unwrap(), stats);
        let first = std::fs::read_to_string(&p).unwrap();
        assert!(first.starts_with("we\t5401\nan\t4221\n"));
    }
}
