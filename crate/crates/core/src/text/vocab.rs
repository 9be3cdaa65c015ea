use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::tokenize::normalize_question;
use super::RawQuestion;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Word/index bijection with `PAD = 0` and `UNK = 1` reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_entries(Vec::new())
    }
}

impl Vocabulary {
    /// Builds a vocabulary from non-reserved `(word, count)` pairs, in index order.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Self {
        let mut words = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut counts = vec![0, 0];
        for (w, c) in entries {
            words.push(w);
            counts.push(c);
        }
        let index = words
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Self {
            words,
            counts,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 2
    }

    /// Index of a stemmed token, `UNK` when absent.
    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Stable 64-bit fingerprint of the index assignment.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update([0u8]);
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    /// Writes `word<TAB>count` lines in index order, reserved entries included.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (word, count) in self.words.iter().zip(&self.counts) {
            writeln!(w, "{word}\t{count}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
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
            match lineno {
                0 if word != PAD_TOKEN => return Err(parse_err("first entry must be <pad>")),
                1 if word != UNK_TOKEN => return Err(parse_err("second entry must be <unk>")),
                0 | 1 => {}
                _ => entries.push((word.to_string(), count)),
            }
        }
        let vocab = Self::from_entries(entries);
        if vocab.index.len() + 2 != vocab.words.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: "duplicate words".into(),
            });
        }
        Ok(vocab)
    }
}

/// Counts stemmed tokens over a corpus (whole question text, untruncated).
pub(crate) fn count_tokens<'a>(
    corpus: impl IntoIterator<Item = &'a RawQuestion>,
) -> HashMap<String, u64> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for q in corpus {
        for t in normalize_question(&q.subject, &q.body) {
            *counts.entry(t).or_default() += 1;
        }
    }
    counts
}

/// Sorts by descending count, ties broken lexicographically.
pub(crate) fn sorted_by_count(counts: HashMap<String, u64>) -> Vec<(String, u64)> {
    let mut entries: Vec<_> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries
}

pub fn build_vocabulary<'a>(
    corpus: impl IntoIterator<Item = &'a RawQuestion>,
    min_count: u64,
) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::InvalidArgument("min_count must be >= 1".into()));
    }
    let entries = sorted_by_count(count_tokens(corpus))
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    Ok(Vocabulary::from_entries(entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(body: &str) -> RawQuestion {
        RawQuestion {
            id: "q".into(),
            subject: String::new(),
            body: body.into(),
        }
    }

    #[test]
    fn single_document() {
        let corpus = [q("a a b")];
        let v = build_vocabulary(&corpus, 1).unwrap();
        assert_eq!(v.words(), ["<pad>", "<unk>", "a", "b"]);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), 3);
    }

    #[test]
    fn threshold_prunes() {
        let corpus = [q("a a b")];
        let v = build_vocabulary(&corpus, 2).unwrap();
        assert_eq!(v.words(), ["<pad>", "<unk>", "a"]);
        assert_eq!(v.id("b"), UNK);
    }

    #[test]
    fn empty_corpus_has_only_reserved() {
        let v = build_vocabulary(std::iter::empty(), 1).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.is_empty());
    }

    #[test]
    fn ties_are_lexicographic_and_deterministic() {
        let corpus = [q("zeta alpha mid mid"), q("beta")];
        let a = build_vocabulary(&corpus, 1).unwrap();
        let b = build_vocabulary(&corpus, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.words(), ["<pad>", "<unk>", "mid", "alpha", "beta", "zeta"]);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn zero_min_count_rejected() {
        assert!(build_vocabulary(std::iter::empty(), 0).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let corpus = [q("visa renew visa, permit? office")];
        let v = build_vocabulary(&corpus, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        v.save(&path).unwrap();
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(v, back);
        for id in 2..v.len() {
            assert_eq!(back.id(v.word(id).unwrap()), id);
        }
    }
}
