//! Learning-free reranking: representation similarity pooled per query word,
//! reduced for lexical mismatch, and scaled by the search engine's rank.

mod predictions;

pub use predictions::{read_predictions, write_predictions};

use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;

use crate::autoencoder::AutoencoderModel;
use crate::error::{Error, Result};
use crate::eval::{evaluate, GoldLabels, Label};
use crate::kernel::Matrix;
use crate::text::{preprocess_question, word_importance, QueryRecord, TermStats, TokenSequence, Vocabulary};

pub const DEFAULT_ALPHA: f64 = 0.035;
/// Lower bound applied to each per-word term before taking the product.
pub const SCORE_FLOOR: f64 = 1e-6;

/// 0.010, 0.015, …, 0.100 (19 values).
pub fn alpha_grid() -> Vec<f64> {
    (0..=18).map(|k| (10 + 5 * k) as f64 / 1000.0).collect()
}

/// `S[i][j] = h_q[i] · h_c[j]`.
pub fn interaction_matrix(h_query: &Matrix, h_cand: &Matrix) -> Result<Matrix> {
    if h_query.cols() != h_cand.cols() {
        return Err(Error::shape(
            "interaction_matrix",
            format!("widths {} and {}", h_query.cols(), h_cand.cols()),
        ));
    }
    h_query.matmul_t(h_cand)
}

/// Row maxima of the interaction matrix.
pub fn word_similarities(s: &Matrix) -> Result<Vec<f64>> {
    if s.cols() == 0 {
        return Err(Error::shape("word_similarities", "candidate has no positions"));
    }
    Ok(s.iter_rows()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

/// 1 for query tokens that occur in the candidate, the importance weight otherwise.
pub fn reduced_vector(query: &TokenSequence, candidate: &TokenSequence, importance: &[f64]) -> Result<Vec<f64>> {
    if importance.len() != query.tokens.len() {
        return Err(Error::shape(
            "reduced_vector",
            format!("{} weights for {} query tokens", importance.len(), query.tokens.len()),
        ));
    }
    let present: HashSet<&str> = candidate.tokens.iter().map(String::as_str).collect();
    Ok(query
        .tokens
        .iter()
        .zip(importance)
        .map(|(t, &f)| if present.contains(t.as_str()) { 1.0 } else { f })
        .collect())
}

/// `1 − α · rank`; an error unless strictly positive.
pub fn rank_factor(alpha: f64, initial_rank: u32) -> Result<f64> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    if initial_rank == 0 {
        return Err(Error::InvalidArgument("initial rank starts at 1".into()));
    }
    let r = 1.0 - alpha * initial_rank as f64;
    if r <= 0.0 {
        return Err(Error::RankFactor {
            alpha,
            rank: initial_rank,
        });
    }
    Ok(r)
}

/// `Σ ln max(d_i · sim_i, floor)`, the rank-independent part of the log score.
pub fn log_term_sum(word_sims: &[f64], reduced: &[f64]) -> Result<f64> {
    if word_sims.is_empty() {
        return Err(Error::EmptyQuery);
    }
    if word_sims.len() != reduced.len() {
        return Err(Error::shape(
            "match_score",
            format!("{} similarities vs {} reduction weights", word_sims.len(), reduced.len()),
        ));
    }
    let mut sum = 0.0;
    for (&s, &d) in word_sims.iter().zip(reduced) {
        let t = d * s;
        if t.is_nan() {
            return Err(Error::NonFinite("match term".into()));
        }
        sum += t.max(SCORE_FLOOR).ln();
    }
    Ok(sum)
}

/// Natural log of [`match_score`].
pub fn log_match_score(word_sims: &[f64], reduced: &[f64], initial_rank: u32, alpha: f64) -> Result<f64> {
    let terms = log_term_sum(word_sims, reduced)?;
    Ok(rank_factor(alpha, initial_rank)?.ln() + terms)
}

/// `R · Π max(d_i · sim_i, floor)` with `R = 1 − α · rank`, evaluated in log space.
pub fn match_score(word_sims: &[f64], reduced: &[f64], initial_rank: u32, alpha: f64) -> Result<f64> {
    log_match_score(word_sims, reduced, initial_rank, alpha).map(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOptions {
    pub alpha: f64,
    /// Apply the lexical-mismatch reduction; when off every weight is 1.
    pub mismatch: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            mismatch: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub cand_id: String,
    pub seq: TokenSequence,
    pub initial_rank: u32,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingInstance {
    pub query_id: String,
    pub query: TokenSequence,
    pub candidates: Vec<Candidate>,
}

impl RankingInstance {
    pub fn from_record(rec: &QueryRecord, vocab: &Vocabulary, max_len: usize) -> Result<Self> {
        let candidates = rec
            .candidates
            .iter()
            .map(|c| {
                Ok(Candidate {
                    cand_id: c.cand_id.clone(),
                    seq: preprocess_question(&c.subject, &c.body, vocab, max_len)?,
                    initial_rank: c.initial_rank,
                    label: c.label,
                })
            })
            .collect::<Result<_>>()?;
        let inst = Self {
            query_id: rec.query_id.clone(),
            query: preprocess_question(&rec.subject, &rec.body, vocab, max_len)?,
            candidates,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Initial ranks in 1..=10 and distinct; candidate ids distinct.
    pub fn validate(&self) -> Result<()> {
        let mut ranks = HashSet::new();
        let mut ids = HashSet::new();
        for c in &self.candidates {
            if !(1..=10).contains(&c.initial_rank) || !ranks.insert(c.initial_rank) {
                return Err(Error::InvalidArgument(format!(
                    "query {}: initial rank {} of {} is out of range or repeated",
                    self.query_id, c.initial_rank, c.cand_id
                )));
            }
            if !ids.insert(c.cand_id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "query {}: duplicate candidate {}",
                    self.query_id, c.cand_id
                )));
            }
        }
        Ok(())
    }
}

/// Collects the labels carried by the instances; unlabeled candidates are skipped.
pub fn gold_from_instances(instances: &[RankingInstance]) -> GoldLabels {
    let mut gold = GoldLabels::new();
    for inst in instances {
        for c in &inst.candidates {
            if let Some(l) = c.label {
                gold.insert(inst.query_id.clone(), c.cand_id.clone(), l);
            }
        }
    }
    gold
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub cand_id: String,
    pub score: f64,
    pub output_rank: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRanking {
    pub query_id: String,
    pub entries: Vec<ScoredCandidate>,
}

/// Rank-independent part of one candidate's score.
#[derive(Debug, Clone, PartialEq)]
struct CandidateTerms {
    cand_id: String,
    initial_rank: u32,
    /// `None` for an empty candidate, which scores zero.
    log_terms: Option<f64>,
}

fn candidate_terms(
    inst: &RankingInstance,
    model: &AutoencoderModel,
    stats: &TermStats,
    mismatch: bool,
) -> Result<Vec<CandidateTerms>> {
    inst.validate()?;
    if inst.query.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let h_query = model.encode_sequence(&inst.query)?;
    let importance = word_importance(&inst.query, stats)?;
    inst.candidates
        .par_iter()
        .map(|c| {
            let log_terms = if c.seq.is_empty() {
                None
            } else {
                let h_cand = model.encode_sequence(&c.seq)?;
                let sims = word_similarities(&interaction_matrix(&h_query, &h_cand)?)?;
                let reduced = if mismatch {
                    reduced_vector(&inst.query, &c.seq, &importance)?
                } else {
                    vec![1.0; sims.len()]
                };
                Some(log_term_sum(&sims, &reduced)?)
            };
            Ok(CandidateTerms {
                cand_id: c.cand_id.clone(),
                initial_rank: c.initial_rank,
                log_terms,
            })
        })
        .collect()
}

fn order_candidates(query_id: &str, terms: &[CandidateTerms], alpha: f64) -> Result<ScoredRanking> {
    let mut scored = terms
        .iter()
        .map(|t| {
            let r = rank_factor(alpha, t.initial_rank)?;
            let log = t.log_terms.map_or(f64::NEG_INFINITY, |s| r.ln() + s);
            Ok((log, t))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|(la, a), (lb, b)| {
        lb.total_cmp(la)
            .then(a.initial_rank.cmp(&b.initial_rank))
            .then_with(|| a.cand_id.cmp(&b.cand_id))
    });
    Ok(ScoredRanking {
        query_id: query_id.to_string(),
        entries: scored
            .into_iter()
            .enumerate()
            .map(|(i, (log, t))| ScoredCandidate {
                cand_id: t.cand_id.clone(),
                score: log.exp(),
                output_rank: i as u32 + 1,
            })
            .collect(),
    })
}

/// Scores every candidate of `instance` and sorts by descending score; ties go
/// to the better initial rank, then the smaller candidate id.
pub fn rank_candidates(
    instance: &RankingInstance,
    model: &AutoencoderModel,
    stats: &TermStats,
    opts: MatchOptions,
) -> Result<ScoredRanking> {
    let terms = candidate_terms(instance, model, stats, opts.mismatch)?;
    order_candidates(&instance.query_id, &terms, opts.alpha)
}

/// Ranks many instances in parallel; output order follows input order.
pub fn rank_all(
    instances: &[RankingInstance],
    model: &AutoencoderModel,
    stats: &TermStats,
    opts: MatchOptions,
) -> Result<Vec<ScoredRanking>> {
    instances
        .par_iter()
        .map(|inst| rank_candidates(inst, model, stats, opts))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSearch {
    pub best_alpha: f64,
    /// Development MAP of `best_alpha`, as a fraction.
    pub best_map: f64,
    /// `(alpha, MAP)` for every grid value in ascending order.
    pub table: Vec<(f64, f64)>,
}

/// Picks the grid value with the highest development MAP; ties go to the smaller value.
pub fn grid_search_alpha(
    dev: &[RankingInstance],
    model: &AutoencoderModel,
    stats: &TermStats,
    grid: &[f64],
    mismatch: bool,
) -> Result<AlphaSearch> {
    if dev.is_empty() {
        return Err(Error::InvalidArgument("empty development set".into()));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty alpha grid".into()));
    }
    let gold = gold_from_instances(dev);
    let terms: Vec<Vec<CandidateTerms>> = dev
        .par_iter()
        .map(|inst| candidate_terms(inst, model, stats, mismatch))
        .collect::<Result<_>>()?;

    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut table = Vec::with_capacity(sorted.len());
    let mut best: Option<(f64, f64)> = None;
    for alpha in sorted {
        let rankings = dev
            .iter()
            .zip(&terms)
            .map(|(inst, t)| order_candidates(&inst.query_id, t, alpha))
            .collect::<Result<Vec<_>>>()?;
        let map = evaluate(&rankings, &gold)?.map;
        table.push((alpha, map));
        if best.is_none_or(|(_, m)| map.partial_cmp(&m) == Some(Ordering::Greater)) {
            best = Some((alpha, map));
        }
    }
    let (best_alpha, best_map) = best.expect("grid is non-empty");
    Ok(AlphaSearch {
        best_alpha,
        best_map,
        table,
    })
}

#[cfg(test)]
mod tests;
