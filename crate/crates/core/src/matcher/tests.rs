use super::*;
use crate::autoencoder::ModelConfig;
use crate::text::{build_vocabulary, RawQuestion};

fn seq(words: &[&str]) -> TokenSequence {
    TokenSequence::from_tokens(words.iter().map(|s| s.to_string()).collect(), &Vocabulary::default())
}

#[test]
fn interaction_hand_example() {
    let hq = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]);
    let hc = Matrix::from_rows(&[[1.0, 1.0]]);
    assert_eq!(interaction_matrix(&hq, &hc).unwrap(), Matrix::from_rows(&[[1.0], [2.0]]));
    assert!(interaction_matrix(&hq, &Matrix::zeros(1, 3)).is_err());
}

#[test]
fn orthogonal_rows_give_zero_and_unit_rows_give_unit_diagonal() {
    let a = Matrix::from_rows(&[[1.0, 0.0]]);
    let b = Matrix::from_rows(&[[0.0, 3.0]]);
    assert_eq!(interaction_matrix(&a, &b).unwrap(), Matrix::zeros(1, 1));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = Matrix::from_rows(&[[1.0, 0.0], [s, s]]);
    let m = interaction_matrix(&h, &h).unwrap();
    assert_eq!(m.get(0, 0), 1.0);
    assert!((m.get(1, 1) - 1.0).abs() < 1e-15);
}

#[test]
fn row_maxima() {
    assert_eq!(word_similarities(&Matrix::from_rows(&[[0.5, 0.9]])).unwrap(), [0.9]);
    let s = Matrix::from_rows(&[[0.2, 0.6], [0.3, 0.1]]);
    assert_eq!(word_similarities(&s).unwrap(), [0.6, 0.3]);
    let col = Matrix::from_rows(&[[0.4], [-0.2]]);
    assert_eq!(word_similarities(&col).unwrap(), [0.4, -0.2]);
    assert!(word_similarities(&Matrix::zeros(2, 0)).is_err());
}

#[test]
fn reduced_vector_worked_example() {
    let q = seq(&["we", "propos", "an", "unsupervis", "model"]);
    let c = seq(&["we", "propos", "a", "model"]);
    let f = [0.5401, 0.0075, 0.4221, 0.0008, 0.0295];
    assert_eq!(reduced_vector(&q, &c, &f).unwrap(), [1.0, 1.0, 0.4221, 0.0008, 1.0]);
    assert_eq!(reduced_vector(&q, &q, &f).unwrap(), [1.0; 5]);
    assert_eq!(reduced_vector(&q, &seq(&["zzz"]), &f).unwrap(), f);
    assert!(reduced_vector(&q, &c, &f[..4]).is_err());
}

#[test]
fn match_score_hand_example() {
    let s = match_score(&[0.6, 0.3], &[1.0, 0.5], 1, 0.035).unwrap();
    assert!((s - 0.08685).abs() < 1e-12);
    let no_rank = match_score(&[0.6, 0.3], &[1.0, 0.5], 7, 0.0).unwrap();
    assert!((no_rank - 0.09).abs() < 1e-12);
}

#[test]
fn match_score_errors() {
    assert!(matches!(match_score(&[0.5], &[1.0], 10, 0.1), Err(Error::RankFactor { rank: 10, .. })));
    assert!(matches!(match_score(&[], &[], 1, 0.0), Err(Error::EmptyQuery)));
    assert!(match_score(&[0.5], &[1.0, 1.0], 1, 0.0).is_err());
    assert!(match_score(&[0.5], &[1.0], 0, 0.0).is_err());
    assert!(match_score(&[0.5], &[1.0], 1, -0.01).is_err());
}

#[test]
fn non_positive_terms_are_floored() {
    let s = match_score(&[-3.0, 0.0], &[1.0, 1.0], 1, 0.0).unwrap();
    assert!((s - SCORE_FLOOR * SCORE_FLOOR).abs() < 1e-24);
}

#[test]
fn grid_has_nineteen_values() {
    let g = alpha_grid();
    assert_eq!(g.len(), 19);
    assert_eq!(g[0], 0.01);
    assert_eq!(g[18], 0.1);
    assert_eq!(g[1], 0.015);
    assert!(g.windows(2).all(|w| ((w[1] - w[0]) - 0.005).abs() < 1e-12));
    assert!(g.contains(&DEFAULT_ALPHA));
}

fn tiny_model(corpus: &[&str]) -> (Vocabulary, AutoencoderModel, TermStats) {
    let raw: Vec<RawQuestion> = corpus
        .iter()
        .enumerate()
        .map(|(i, b)| RawQuestion {
            id: i.to_string(),
            subject: String::new(),
            body: b.to_string(),
        })
        .collect();
    let vocab = build_vocabulary(&raw, 1).unwrap();
    let cfg = ModelConfig {
        vocab_size: vocab.len(),
        d_model: 8,
        d_ff: 16,
        layers: 1,
        positional_encoding: true,
    };
    let model = AutoencoderModel::new(cfg, vocab.fingerprint(), 7);
    let stats = crate::text::term_frequency_stats(&raw);
    (vocab, model, stats)
}

fn instance(vocab: &Vocabulary, query: &str, cands: &[(&str, &str, u32)]) -> RankingInstance {
    let rec = QueryRecord {
        query_id: "q".into(),
        subject: String::new(),
        body: query.into(),
        candidates: cands
            .iter()
            .map(|&(id, body, rank)| crate::text::CandidateRecord {
                cand_id: id.into(),
                subject: String::new(),
                body: body.into(),
                initial_rank: rank,
                label: None,
            })
            .collect(),
    };
    RankingInstance::from_record(&rec, vocab, 128).unwrap()
}

const CORPUS: &[&str] = &[
    "how to renew my visa in doha",
    "where can i buy a car",
    "best school for kids in qatar",
    "visa renewal fee for family",
];

#[test]
fn identical_candidates_ordered_by_initial_rank() {
    let (vocab, model, stats) = tiny_model(CORPUS);
    let inst = instance(&vocab, "renew visa", &[("b", "visa fee", 2), ("a", "visa fee", 1)]);
    let r = rank_candidates(&inst, &model, &stats, MatchOptions::default()).unwrap();
    assert_eq!(r.entries[0].cand_id, "a");
    assert!(r.entries[0].score > r.entries[1].score);
    assert_eq!(r.entries.iter().map(|e| e.output_rank).collect::<Vec<_>>(), [1, 2]);
}

#[test]
fn ties_broken_by_initial_rank_without_rank_factor() {
    let (vocab, model, stats) = tiny_model(CORPUS);
    let inst = instance(&vocab, "renew visa", &[("z", "visa fee", 3), ("y", "visa fee", 1), ("x", "visa fee", 2)]);
    let opts = MatchOptions { alpha: 0.0, mismatch: true };
    let r = rank_candidates(&inst, &model, &stats, opts).unwrap();
    assert_eq!(r.entries.iter().map(|e| e.cand_id.as_str()).collect::<Vec<_>>(), ["y", "x", "z"]);
    assert_eq!(r.entries[0].score, r.entries[2].score);
}

#[test]
fn empty_candidate_sorts_last_with_zero_score() {
    let (vocab, model, stats) = tiny_model(CORPUS);
    let inst = instance(&vocab, "renew visa", &[("e", "", 1), ("a", "car school", 2)]);
    let r = rank_candidates(&inst, &model, &stats, MatchOptions::default()).unwrap();
    assert_eq!(r.entries[1].cand_id, "e");
    assert_eq!(r.entries[1].score, 0.0);
}

#[test]
fn empty_query_rejected() {
    let (vocab, model, stats) = tiny_model(CORPUS);
    let inst = instance(&vocab, "", &[("a", "visa", 1)]);
    assert!(matches!(
        rank_candidates(&inst, &model, &stats, MatchOptions::default()),
        Err(Error::EmptyQuery)
    ));
}

#[test]
fn mismatch_reduction_penalises_missing_rare_word() {
    let (vocab, model, stats) = tiny_model(CORPUS);
    let q = "renew visa doha";
    let inst = instance(&vocab, q, &[("same", q, 1), ("swap", "renew visa zebra", 2)]);
    let opts = MatchOptions { alpha: 0.0, mismatch: true };
    let r = rank_candidates(&inst, &model, &stats, opts).unwrap();
    let score = |id: &str| r.entries.iter().find(|e| e.cand_id == id).unwrap().score;
    let h_q = model.encode_sequence(&inst.query).unwrap();
    let sims = |c: &TokenSequence| {
        word_similarities(&interaction_matrix(&h_q, &model.encode_sequence(c).unwrap()).unwrap()).unwrap()
    };
    let f = word_importance(&inst.query, &stats).unwrap();
    let d = reduced_vector(&inst.query, &inst.candidates[1].seq, &f).unwrap();
    assert_eq!(d[..2], [1.0, 1.0]);
    assert!(d[2] < 1.0);
    let expect_same = match_score(&sims(&inst.candidates[0].seq), &[1.0; 3], 1, 0.0).unwrap();
    let expect_swap = match_score(&sims(&inst.candidates[1].seq), &d, 2, 0.0).unwrap();
    assert!((score("same") - expect_same).abs() <= 1e-12 * expect_same.abs());
    assert!((score("swap") - expect_swap).abs() <= 1e-12 * expect_swap.abs());
}

#[test]
fn no_mismatch_option_uses_unit_weights() {
    let (vocab, model, stats) = tiny_model(CORPUS);
    let inst = instance(&vocab, "renew visa doha", &[("a", "car school", 1)]);
    let r = rank_candidates(&inst, &model, &stats, MatchOptions { alpha: 0.0, mismatch: false }).unwrap();
    let h_q = model.encode_sequence(&inst.query).unwrap();
    let h_c = model.encode_sequence(&inst.candidates[0].seq).unwrap();
    let sims = word_similarities(&interaction_matrix(&h_q, &h_c).unwrap()).unwrap();
    let direct: f64 = sims.iter().map(|s| s.max(SCORE_FLOOR)).product();
    assert!((r.entries[0].score - direct).abs() <= 1e-9 * direct);
}

#[test]
fn ranking_is_deterministic() {
    let (vocab, model, stats) = tiny_model(CORPUS);
    let inst = instance(
        &vocab,
        "visa renewal in qatar",
        &[("a", "buy a car", 1), ("b", "visa fee", 2), ("c", "school kids", 3)],
    );
    let a = rank_candidates(&inst, &model, &stats, MatchOptions::default()).unwrap();
    let b = rank_candidates(&inst, &model, &stats, MatchOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_instances_rejected() {
    let vocab = Vocabulary::default();
    let rec = |ranks: &[u32]| QueryRecord {
        query_id: "q".into(),
        subject: String::new(),
        body: "x".into(),
        candidates: ranks
            .iter()
            .enumerate()
            .map(|(i, &r)| crate::text::CandidateRecord {
                cand_id: format!("c{i}"),
                subject: String::new(),
                body: "y".into(),
                initial_rank: r,
                label: None,
            })
            .collect(),
    };
    assert!(RankingInstance::from_record(&rec(&[1, 2]), &vocab, 128).is_ok());
    assert!(RankingInstance::from_record(&rec(&[1, 1]), &vocab, 128).is_err());
    assert!(RankingInstance::from_record(&rec(&[0]), &vocab, 128).is_err());
    assert!(RankingInstance::from_record(&rec(&[11]), &vocab, 128).is_err());
}

/// Exhaustive reference: rank by direct products, evaluate, pick the first best alpha.
fn brute_force_alpha(inst: &RankingInstance, model: &AutoencoderModel, stats: &TermStats) -> f64 {
    let h_q = model.encode_sequence(&inst.query).unwrap();
    let f = word_importance(&inst.query, stats).unwrap();
    let mut best = (f64::NAN, -1.0);
    for alpha in alpha_grid() {
        let mut scored: Vec<(f64, u32, bool)> = inst
            .candidates
            .iter()
            .map(|c| {
                let h_c = model.encode_sequence(&c.seq).unwrap();
                let s = interaction_matrix(&h_q, &h_c).unwrap();
                let d = reduced_vector(&inst.query, &c.seq, &f).unwrap();
                let mut prod = 1.0 - alpha * c.initial_rank as f64;
                for i in 0..s.rows() {
                    let m = s.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    prod *= (d[i] * m).max(SCORE_FLOOR);
                }
                (prod, c.initial_rank, c.label.unwrap().is_relevant())
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let first = scored.iter().position(|s| s.2).unwrap();
        let ap = 1.0 / (first + 1) as f64;
        if ap > best.1 {
            best = (alpha, ap);
        }
    }
    best.0
}

#[test]
fn grid_search_matches_exhaustive_loop() {
    let (vocab, model, stats) = tiny_model(CORPUS);
    let cands = [
        ("a", "buy a car", 1),
        ("b", "best school for kids", 2),
        ("c", "renew visa in doha", 3),
        ("d", "visa renewal fee", 4),
        ("e", "family car in qatar", 5),
    ];
    for relevant in ["a", "b", "c", "d", "e"] {
        let mut inst = instance(&vocab, "how to renew visa for family", &cands);
        for c in &mut inst.candidates {
            c.label = Some(if c.cand_id == relevant { Label::Relevant } else { Label::Irrelevant });
        }
        let search = grid_search_alpha(std::slice::from_ref(&inst), &model, &stats, &alpha_grid(), true).unwrap();
        assert_eq!(search.best_alpha, brute_force_alpha(&inst, &model, &stats), "relevant {relevant}");
        assert_eq!(search.table.len(), 19);
    }
}

#[test]
fn grid_search_ties_pick_smallest_alpha() {
    let (vocab, model, stats) = tiny_model(CORPUS);
    // Identical candidate texts: any positive alpha puts the better initial rank first.
    let mut inst = instance(&vocab, "visa fee", &[("a", "visa fee", 1), ("b", "visa fee", 2)]);
    inst.candidates[0].label = Some(Label::PerfectMatch);
    inst.candidates[1].label = Some(Label::Irrelevant);
    let grid = [0.05, 0.01, 0.02];
    let s = grid_search_alpha(&[inst], &model, &stats, &grid, true).unwrap();
    assert_eq!(s.best_alpha, 0.01);
    assert_eq!(s.best_map, 1.0);
    assert!(grid_search_alpha(&[], &model, &stats, &grid, true).is_err());
}

#[test]
fn predictions_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pred.tsv");
    let rankings = vec![
        ScoredRanking {
            query_id: "q2".into(),
            entries: vec![
                ScoredCandidate { cand_id: "x".into(), score: 0.5, output_rank: 1 },
                ScoredCandidate { cand_id: "y".into(), score: 0.25, output_rank: 2 },
            ],
        },
        ScoredRanking {
            query_id: "q1".into(),
            entries: vec![ScoredCandidate { cand_id: "z".into(), score: 0.125, output_rank: 1 }],
        },
    ];
    write_predictions(&p, &rankings).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text, "q2\tx\t1\t0.500000\nq2\ty\t2\t0.250000\nq1\tz\t1\t0.125000\n");
    let back = read_predictions(&p).unwrap();
    assert_eq!(back[0].query_id, "q1");
    assert_eq!(back[1], rankings[0]);

    std::fs::write(&p, "q\tc\tone\t0.1\n").unwrap();
    assert!(read_predictions(&p).is_err());
}
