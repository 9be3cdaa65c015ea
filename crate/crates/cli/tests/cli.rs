use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn ramn(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ramn"))
        .current_dir(cwd)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Prepares statistics and trains a tiny model inside `dir`.
fn setup(dir: &Path) {
    fs::copy(data("toy_corpus.jsonl"), dir.join("corpus.jsonl")).unwrap();
    fs::copy(data("toy_queries.jsonl"), dir.join("queries.jsonl")).unwrap();
    assert!(ramn(dir, &["prepare", "--corpus", "corpus.jsonl", "--out", "stats"]).status.success());
    let o = ramn(
        dir,
        &[
            "train", "--corpus", "corpus.jsonl", "--dev", "corpus.jsonl", "--stats", "stats", "--out", "m.ckpt",
            "--epochs", "2", "--d-model", "8", "--d-ff", "16", "--layers", "1",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

fn rank(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "rank", "--model", "m.ckpt", "--stats", "stats", "--queries", "queries.jsonl", "--out", out,
    ];
    args.extend_from_slice(extra);
    ramn(dir, &args)
}

#[test]
fn unknown_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = ramn(dir.path(), &["prepare", "--corpus", "x", "--out", "y", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--bogus"));
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let o = ramn(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for sub in ["prepare", "train", "tune-alpha", "rank", "evaluate", "reconstruct"] {
        assert!(stdout(&o).contains(sub), "{sub}");
    }
}

#[test]
fn every_missing_file_reported_on_its_own_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = ramn(
        dir.path(),
        &["train", "--corpus", "a.jsonl", "--dev", "b.jsonl", "--stats", "s", "--out", "m.ckpt"],
    );
    assert_eq!(o.status.code(), Some(2));
    let lines: Vec<String> = stderr(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 3, "{lines:?}");
    assert!(lines.iter().all(|l| l.starts_with("error: missing input file")));
    assert!(!dir.path().join("m.ckpt").exists());
}

#[test]
fn schema_violation_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.jsonl"), "{\"id\":\"1\",\"body\":\"ok\"}\n{\"subject\":3}\n").unwrap();
    let o = ramn(dir.path(), &["prepare", "--corpus", "bad.jsonl", "--out", "stats"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("bad.jsonl:2"), "{err}");
}

#[test]
fn full_pipeline_and_ablation_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    for f in ["stats/vocab.tsv", "stats/termstats.tsv", "stats/manifest.json", "m.ckpt.log.tsv", "m.ckpt.manifest.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let log = fs::read_to_string(dir.join("m.ckpt.log.tsv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch\ttrain_loss\tdev_loss"));
    assert_eq!(log.lines().count(), 3);

    let full = rank(dir, "full.tsv", &["--gold-out", "gold.tsv"]);
    assert!(full.status.success(), "{}", stderr(&full));
    assert!(rank(dir, "mismatch.tsv", &["--alpha", "0"]).status.success());
    assert!(rank(dir, "base.tsv", &["--alpha", "0", "--no-mismatch"]).status.success());

    let pred = fs::read_to_string(dir.join("full.tsv")).unwrap();
    assert_eq!(pred.lines().count(), 10);
    for line in pred.lines() {
        let f: Vec<&str> = line.split('\t').collect();
        assert_eq!(f.len(), 4);
        assert_eq!(f[3].split('.').nth(1).map(str::len), Some(6));
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("full.tsv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "rank");
    assert_eq!(manifest["config"]["alpha"], 0.035);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 4);

    let base = fs::read_to_string(dir.join("base.tsv")).unwrap();
    let mismatch = fs::read_to_string(dir.join("mismatch.tsv")).unwrap();
    assert_ne!(base, mismatch);

    let ev = ramn(dir, &["evaluate", "--pred", "full.tsv", "--gold", "gold.tsv"]);
    assert!(ev.status.success(), "{}", stderr(&ev));
    let report = stdout(&ev);
    assert!(report.starts_with("MAP\t"), "{report}");
    assert!(report.contains("queries\t4"));
    assert!(report.contains("zero_relevant_queries\t1"));

    let ev2 = ramn(dir, &["evaluate", "--pred", "full.tsv", "--queries", "queries.jsonl"]);
    assert_eq!(stdout(&ev2), report);

    let both = ramn(dir, &["evaluate", "--pred", "full.tsv", "--gold", "gold.tsv", "--queries", "queries.jsonl"]);
    assert_eq!(both.status.code(), Some(2));
    let neither = ramn(dir, &["evaluate", "--pred", "full.tsv"]);
    assert_eq!(neither.status.code(), Some(2));

    let tune = ramn(dir, &["tune-alpha", "--model", "m.ckpt", "--stats", "stats", "--dev", "queries.jsonl", "--out", "alpha.tsv"]);
    assert!(tune.status.success(), "{}", stderr(&tune));
    assert!(stdout(&tune).starts_with("best_alpha\t0."));
    assert_eq!(fs::read_to_string(dir.join("alpha.tsv")).unwrap().lines().count(), 20);

    let rec = ramn(dir, &["reconstruct", "--model", "m.ckpt", "--stats", "stats", "--input", "corpus.jsonl", "--out", "rec.tsv", "--limit", "3"]);
    assert!(rec.status.success(), "{}", stderr(&rec));
    assert_eq!(fs::read_to_string(dir.join("rec.tsv")).unwrap().lines().count(), 4);
}

#[test]
fn bad_alpha_and_mismatched_stats_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    let o = rank(dir, "p.tsv", &["--alpha", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha"));

    fs::write(dir.join("other.jsonl"), "{\"id\":\"x\",\"body\":\"completely different words\"}\n").unwrap();
    assert!(ramn(dir, &["prepare", "--corpus", "other.jsonl", "--out", "stats"]).status.success());
    let o = rank(dir, "p.tsv", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("vocabulary mismatch"), "{}", stderr(&o));
}

#[test]
fn missing_gold_labels_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("pred.tsv"), "q1\ta\t1\t0.5\nq1\tb\t2\t0.25\n").unwrap();
    fs::write(dir.join("gold.tsv"), "q1\ta\tRelevant\n").unwrap();
    let o = ramn(dir, &["evaluate", "--pred", "pred.tsv", "--gold", "gold.tsv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("q1/b"));
}
