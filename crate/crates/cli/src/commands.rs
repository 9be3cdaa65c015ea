use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log::info;
use ramn::autoencoder::{
    load_checkpoint, load_pretrained_embeddings, save_checkpoint, train, AutoencoderModel, ModelConfig,
    TrainConfig,
};
use ramn::eval::{evaluate, GoldLabels};
use ramn::kernel::seeded_rng;
use ramn::matcher::{
    alpha_grid, gold_from_instances, grid_search_alpha, rank_all, read_predictions, write_predictions,
    MatchOptions, RankingInstance,
};
use ramn::text::{
    build_vocabulary, preprocess_question, read_corpus, read_queries, term_frequency_stats, TermStats,
    TokenSequence, Vocabulary,
};
use ramn::Error;

use crate::manifest::Manifest;
use crate::{Command, EvaluateArgs, ModelInputs, PrepareArgs, RankArgs, ReconstructArgs, TrainArgs, TuneArgs};

const VOCAB_FILE: &str = "vocab.tsv";
const STATS_FILE: &str = "termstats.tsv";

/// Exit code and one diagnostic line per problem.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub messages: Vec<String>,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            messages: vec![msg.into()],
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse { .. } | Error::MissingGold(_) | Error::Checkpoint(_) => 2,
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 2,
            Error::InvalidArgument(_) => 2,
            _ => 1,
        };
        Self {
            code,
            messages: vec![e.to_string()],
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::from(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

type CmdResult = Result<(), Failure>;

/// Reports every missing input at once, before any work starts.
fn require_files(paths: &[&Path]) -> CmdResult {
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| format!("missing input file: {}", p.display()))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: 2,
            messages: missing,
        })
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

fn hash_inputs(manifest: &mut Manifest, paths: &[&Path]) -> CmdResult {
    for p in paths {
        manifest.input(p).map_err(|e| io_failure(p, e))?;
    }
    Ok(())
}

fn write_manifest(manifest: &Manifest, path: &Path) -> CmdResult {
    manifest.write(path).map_err(|e| io_failure(path, e))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

pub fn run(cmd: Command) -> CmdResult {
    match cmd {
        Command::Prepare(a) => prepare(a),
        Command::Train(a) => train_cmd(a),
        Command::TuneAlpha(a) => tune(a),
        Command::Rank(a) => rank(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Reconstruct(a) => reconstruct(a),
    }
}

fn prepare(a: PrepareArgs) -> CmdResult {
    require_files(&[&a.corpus])?;
    if a.min_count == 0 {
        return Err(Failure::usage("--min-count must be at least 1"));
    }
    let corpus = read_corpus(&a.corpus)?;
    info!("read {} questions", corpus.len());
    fs::create_dir_all(&a.out).map_err(|e| io_failure(&a.out, e))?;
    let vocab = build_vocabulary(&corpus, a.min_count)?;
    let stats = term_frequency_stats(&corpus);
    vocab.save(&a.out.join(VOCAB_FILE))?;
    stats.save(&a.out.join(STATS_FILE))?;
    info!("vocabulary {} words, {} distinct terms", vocab.len(), stats.len());

    let mut m = Manifest::new("prepare")
        .config("min_count", a.min_count)
        .config("vocab_size", vocab.len())
        .config("vocab_fingerprint", format!("{:016x}", vocab.fingerprint()));
    hash_inputs(&mut m, &[&a.corpus])?;
    write_manifest(&m, &a.out.join("manifest.json"))
}

fn stats_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join(VOCAB_FILE), dir.join(STATS_FILE))
}

fn load_stats(dir: &Path) -> Result<(Vocabulary, TermStats), Failure> {
    let (v, s) = stats_paths(dir);
    Ok((Vocabulary::load(&v)?, TermStats::load(&s)?))
}

fn sequences(path: &Path, vocab: &Vocabulary, max_len: usize) -> Result<Vec<TokenSequence>, Failure> {
    read_corpus(path)?
        .iter()
        .map(|q| preprocess_question(&q.subject, &q.body, vocab, max_len).map_err(Failure::from))
        .collect()
}

fn train_cmd(a: TrainArgs) -> CmdResult {
    let (vocab_path, stats_path) = stats_paths(&a.stats);
    let mut inputs: Vec<&Path> = vec![&a.corpus, &a.dev, &vocab_path];
    if let Some(e) = &a.embeddings {
        inputs.push(e);
    }
    require_files(&inputs)?;
    let vocab = Vocabulary::load(&vocab_path)?;
    let corpus = sequences(&a.corpus, &vocab, a.max_len)?;
    let dev = sequences(&a.dev, &vocab, a.max_len)?;

    let model_cfg = ModelConfig {
        vocab_size: vocab.len(),
        d_model: a.d_model,
        d_ff: a.d_ff,
        layers: a.layers,
        positional_encoding: !a.no_positional,
    };
    if model_cfg.d_model == 0 || model_cfg.d_ff == 0 || model_cfg.layers == 0 {
        return Err(Failure::usage("--d-model, --d-ff and --layers must be at least 1"));
    }
    let mut model = AutoencoderModel::new(model_cfg, vocab.fingerprint(), a.seed);
    if let Some(path) = &a.embeddings {
        let mut rng = seeded_rng(a.seed.wrapping_add(1));
        let (table, covered) = load_pretrained_embeddings(path, &vocab, a.d_model, &mut rng)?;
        info!("pretrained vectors for {covered} of {} words", vocab.len());
        model.params_mut().embedding = table;
    }
    let cfg = TrainConfig {
        batch_size: a.batch_size,
        lr: a.lr,
        patience: a.patience,
        max_epochs: a.epochs,
        seed: a.seed,
    };
    info!("training on {} questions, {} dev", corpus.len(), dev.len());
    let (best, log) = train(model, &corpus, &dev, &cfg, |r| {
        info!("epoch {} train {:.5} dev {:.5}", r.epoch, r.train_loss, r.dev_loss);
    })?;
    save_checkpoint(&best, &a.out)?;
    let mut tsv = String::from("epoch\ttrain_loss\tdev_loss\n");
    tsv.push_str(&log.to_tsv());
    write_text(&sidecar(&a.out, ".log.tsv"), &tsv)?;

    let mut m = Manifest::new("train")
        .config("epochs", a.epochs)
        .config("batch_size", a.batch_size)
        .config("lr", a.lr)
        .config("patience", a.patience)
        .config("d_model", a.d_model)
        .config("d_ff", a.d_ff)
        .config("layers", a.layers)
        .config("positional_encoding", !a.no_positional)
        .config("max_len", a.max_len)
        .config("best_epoch", log.best_epoch)
        .config("stopped_early", log.stopped_early);
    m.seed = Some(a.seed);
    let mut hashed = inputs.clone();
    if stats_path.is_file() {
        hashed.push(&stats_path);
    }
    hash_inputs(&mut m, &hashed)?;
    write_manifest(&m, &sidecar(&a.out, ".manifest.json"))
}

struct Loaded {
    vocab: Vocabulary,
    stats: TermStats,
    model: AutoencoderModel,
}

fn model_input_paths(i: &ModelInputs) -> [PathBuf; 3] {
    let (v, s) = stats_paths(&i.stats);
    [i.model.clone(), v, s]
}

fn load_model(i: &ModelInputs) -> Result<Loaded, Failure> {
    if i.max_len == 0 {
        return Err(Failure::usage("--max-len must be at least 1"));
    }
    let (vocab, stats) = load_stats(&i.stats)?;
    let model = load_checkpoint(&i.model, &vocab)?;
    Ok(Loaded { vocab, stats, model })
}

fn instances(path: &Path, vocab: &Vocabulary, max_len: usize) -> Result<Vec<RankingInstance>, Failure> {
    read_queries(path)?
        .iter()
        .map(|q| RankingInstance::from_record(q, vocab, max_len).map_err(Failure::from))
        .collect()
}

fn tune(a: TuneArgs) -> CmdResult {
    let model_paths = model_input_paths(&a.inputs);
    let mut inputs: Vec<&Path> = model_paths.iter().map(PathBuf::as_path).collect();
    inputs.push(&a.dev);
    require_files(&inputs)?;
    let l = load_model(&a.inputs)?;
    let dev = instances(&a.dev, &l.vocab, a.inputs.max_len)?;
    let search = grid_search_alpha(&dev, &l.model, &l.stats, &alpha_grid(), !a.no_mismatch)?;

    let mut table = String::from("alpha\tmap\n");
    for (alpha, map) in &search.table {
        writeln!(table, "{alpha:.3}\t{:.4}", map * 100.0).expect("string write");
    }
    write_text(&a.out, &table)?;
    println!("best_alpha\t{:.3}", search.best_alpha);
    println!("dev_map\t{:.2}", search.best_map * 100.0);

    let mut m = Manifest::new("tune-alpha")
        .config("mismatch", !a.no_mismatch)
        .config("max_len", a.inputs.max_len)
        .config("grid", alpha_grid())
        .config("best_alpha", search.best_alpha);
    hash_inputs(&mut m, &inputs)?;
    write_manifest(&m, &sidecar(&a.out, ".manifest.json"))
}

fn rank(a: RankArgs) -> CmdResult {
    let model_paths = model_input_paths(&a.inputs);
    let mut inputs: Vec<&Path> = model_paths.iter().map(PathBuf::as_path).collect();
    inputs.push(&a.queries);
    require_files(&inputs)?;
    if !(a.alpha >= 0.0 && a.alpha * 10.0 < 1.0) {
        return Err(Failure::usage(format!("--alpha must satisfy 0 <= alpha < 0.1, got {}", a.alpha)));
    }
    let l = load_model(&a.inputs)?;
    let queries = instances(&a.queries, &l.vocab, a.inputs.max_len)?;
    let opts = MatchOptions {
        alpha: a.alpha,
        mismatch: !a.no_mismatch,
    };
    let rankings = rank_all(&queries, &l.model, &l.stats, opts)?;
    write_predictions(&a.out, &rankings)?;
    info!("ranked {} queries", rankings.len());
    if let Some(g) = &a.gold_out {
        gold_from_instances(&queries).save(g)?;
    }

    let mut m = Manifest::new("rank")
        .config("alpha", a.alpha)
        .config("mismatch", !a.no_mismatch)
        .config("max_len", a.inputs.max_len);
    hash_inputs(&mut m, &inputs)?;
    write_manifest(&m, &sidecar(&a.out, ".manifest.json"))
}

fn gold_from_queries(path: &Path) -> Result<GoldLabels, Failure> {
    let mut gold = GoldLabels::new();
    for q in read_queries(path)? {
        for c in q.candidates {
            if let Some(l) = c.label {
                gold.insert(q.query_id.clone(), c.cand_id, l);
            }
        }
    }
    Ok(gold)
}

fn evaluate_cmd(a: EvaluateArgs) -> CmdResult {
    let gold_path = a.gold.as_ref().or(a.queries.as_ref()).expect("clap enforces one gold source");
    require_files(&[&a.pred, gold_path])?;
    let preds = read_predictions(&a.pred)?;
    let gold = match &a.gold {
        Some(p) => GoldLabels::load(p)?,
        None => gold_from_queries(gold_path)?,
    };
    let report = evaluate(&preds, &gold)?;
    let mut text = report.to_string();
    if a.per_query {
        for q in &report.per_query {
            writeln!(
                text,
                "{}\tAP {:.4}\tRR {:.4}\trelevant {}",
                q.query_id, q.average_precision, q.reciprocal_rank, q.relevant
            )
            .expect("string write");
        }
    }
    print!("{text}");

    let mut m = Manifest::new("evaluate").config("per_query", a.per_query);
    hash_inputs(&mut m, &[&a.pred, gold_path])?;
    match &a.out {
        Some(out) => {
            write_text(out, &text)?;
            write_manifest(&m, &sidecar(out, ".manifest.json"))
        }
        None => {
            eprint!("{}", m.to_json());
            Ok(())
        }
    }
}

fn reconstruct(a: ReconstructArgs) -> CmdResult {
    let model_paths = model_input_paths(&a.inputs);
    let mut inputs: Vec<&Path> = model_paths.iter().map(PathBuf::as_path).collect();
    inputs.push(&a.input);
    require_files(&inputs)?;
    let l = load_model(&a.inputs)?;
    let questions = read_corpus(&a.input)?;
    let limit = a.limit.unwrap_or(questions.len());
    let mut out = String::from("id\tinput\treconstruction\n");
    let mut correct = 0usize;
    let mut total = 0usize;
    for q in questions.iter().take(limit) {
        let seq = preprocess_question(&q.subject, &q.body, &l.vocab, a.inputs.max_len)?;
        if seq.is_empty() {
            continue;
        }
        let ids = l.model.greedy_decode(&seq)?;
        let decoded = TokenSequence::from_ids(ids, &l.vocab);
        correct += seq.ids.iter().zip(&decoded.ids).filter(|(a, b)| a == b).count();
        total += seq.len();
        let input: Vec<&str> = seq.ids.iter().map(|&i| l.vocab.word(i).unwrap_or("<unk>")).collect();
        writeln!(out, "{}\t{}\t{}", q.id, input.join(" "), decoded.tokens.join(" ")).expect("string write");
    }
    write_text(&a.out, &out)?;
    if total > 0 {
        println!("token_accuracy\t{:.4}", correct as f64 / total as f64);
    }

    let mut m = Manifest::new("reconstruct")
        .config("limit", a.limit)
        .config("max_len", a.inputs.max_len);
    hash_inputs(&mut m, &inputs)?;
    write_manifest(&m, &sidecar(&a.out, ".manifest.json"))
}
