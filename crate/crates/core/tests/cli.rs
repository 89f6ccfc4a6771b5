use std::path::Path;
use std::process::{Command, Output};

fn cltc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cltc")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn synthetic(dir: &Path) {
    let out = cltc(&[
        "gen-synthetic",
        "--out",
        dir.to_str().unwrap(),
        "--languages",
        "en,de",
        "--docs-per-language",
        "40,40",
        "--vocab-size",
        "300",
        "--dim",
        "8",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&cltc(&["--help"])), 0);
    assert_eq!(code(&cltc(&["no-such-command"])), 1);
    assert_eq!(code(&cltc(&["align-svd"])), 1);
    assert_eq!(code(&cltc(&["gradcheck", "--configs", "many"])), 1);
}

#[test]
fn align_svd_recovers_planted_rotation() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path());
    let p = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let out = cltc(&[
        "align-svd",
        "--src",
        &p("emb.de.txt"),
        "--src-lang",
        "de",
        "--tgt",
        &p("emb.en.txt"),
        "--tgt-lang",
        "en",
        "--dict",
        &p("dict.de-en.train.tsv"),
        "--test-dict",
        &p("dict.de-en.test.tsv"),
        "--out",
        &p("aligned"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("aligned/emb.de.txt").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("P@1"));
}

#[test]
fn validation_and_runtime_failures() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path());
    let p = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let emb = format!("en={}", p("emb.en.txt"));

    // unknown architecture is a validation error
    let out = cltc(&["train-classifier", "--arch", "lstm", "--train", &p("docs.tsv"), "--valid", &p("docs.tsv"), "--embeddings", &emb]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));

    // a missing input file is a runtime failure
    let out = cltc(&["train-classifier", "--arch", "ft-mlp", "--train", &p("absent.tsv"), "--valid", &p("docs.tsv"), "--embeddings", &emb]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));

    // a tampered report fails its consistency check
    std::fs::write(dir.path().join("bad.tsv"), "not a report\n").unwrap();
    let out = cltc(&["report", "--input", &p("bad.tsv")]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn evaluate_writes_report_that_report_rerenders() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = cltc(&[
        "evaluate",
        "--out",
        run.to_str().unwrap(),
        "--docs_per_language",
        "[60, 60, 12]",
        "--vocab_size",
        "300",
        "--dim",
        "10",
        "--variants",
        "[\"exp_dict\"]",
        "--max_epochs",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let tsv = run.join("report.tsv");
    assert!(tsv.exists());
    let out = cltc(&["report", "--input", tsv.to_str().unwrap(), "--format", "tsv"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout), std::fs::read_to_string(&tsv).unwrap());
}
