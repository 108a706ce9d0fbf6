//! End-to-end tests that drive the compiled binary the way a user would:
//! prep/split/train/eval over small CSV fixtures in temp directories.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hatecls::encoder::{EncoderConfig, Transformer};
use hatecls::trainer::load_checkpoint;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hatecls"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        stdout_of(out),
        stderr_of(out)
    );
}

/// Writes a Waseem-layout CSV (id,text,label).
fn write_labeled_csv(path: &Path, rows: &[(&str, &str)]) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["id", "text", "label"]).unwrap();
    for (i, (text, label)) in rows.iter().enumerate() {
        w.write_record([format!("r{i}").as_str(), text, label])
            .unwrap();
    }
    w.flush().unwrap();
}

/// Three repeated patterns, one per class: trivially memorizable.
fn keyword_rows(per_class: usize) -> Vec<(&'static str, &'static str)> {
    let mut rows = Vec::new();
    for _ in 0..per_class {
        rows.push(("alpha alpha alpha alpha", "racism"));
        rows.push(("bravo bravo bravo bravo", "sexism"));
        rows.push(("charlie charlie charlie charlie", "neither"));
    }
    rows
}

fn data_rows(csv_path: &Path) -> usize {
    let mut r = csv::Reader::from_path(csv_path).unwrap();
    r.records().count()
}

/// Unescapes the fixture encoding used for raw tweets: `\t`, `\n`, `\\`.
fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

fn golden_pairs(n: usize) -> Vec<(String, String)> {
    let raw = fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_prep.tsv"),
    )
    .unwrap();
    raw.lines()
        .take(n)
        .map(|line| {
            let mut cols = line.split('\t');
            let raw = unescape(cols.next().unwrap());
            let normalized = cols.next().unwrap().to_string();
            (raw, normalized)
        })
        .collect()
}

#[test]
fn prep_rewrites_only_the_text_column() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let output = dir.path().join("out.csv");
    let pairs = golden_pairs(3);

    let mut w = csv::Writer::from_path(&input).unwrap();
    w.write_record(["id", "text", "label"]).unwrap();
    for (i, (raw, _)) in pairs.iter().enumerate() {
        w.write_record([&format!("r{i}"), raw, "neither"]).unwrap();
    }
    w.flush().unwrap();

    let out = run(&[
        "prep",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_success(&out);

    let mut expected = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut expected);
        w.write_record(["id", "text", "label"]).unwrap();
        for (i, (_, normalized)) in pairs.iter().enumerate() {
            w.write_record([&format!("r{i}"), normalized, "neither"])
                .unwrap();
        }
        w.flush().unwrap();
    }
    assert_eq!(fs::read(&output).unwrap(), expected);
}

#[test]
fn prep_of_headers_only_yields_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let output = dir.path().join("out.csv");
    fs::write(&input, "id,text,label\n").unwrap();

    let out = run(&[
        "prep",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert_eq!(fs::read_to_string(&output).unwrap(), "id,text,label\n");
}

#[test]
fn prep_missing_text_column_is_named_in_the_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(&input, "id,body,label\nr0,hello,neither\n").unwrap();

    let out = run(&["prep", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(stderr_of(&out).trim()).unwrap();
    assert_eq!(err["error"]["code"], "malformed_row");
    assert!(err["error"]["message"].as_str().unwrap().contains("\"text\""));
}

fn split_args<'a>(csv: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "split",
        "--dataset",
        "waseem",
        "--waseem-hovy",
        csv,
        "--out",
        out,
        "--seed",
        "11",
        "--ratios",
        "0.5,0.25,0.25",
    ]
}

#[test]
fn split_is_deterministic_and_respects_ratio_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let rows: Vec<(&str, &str)> = (0..8).map(|_| ("just words here", "neither")).collect();
    write_labeled_csv(&input, &rows);

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run(&split_args(
            input.to_str().unwrap(),
            out_dir.to_str().unwrap(),
        ));
        assert_success(&out);
    }

    assert_eq!(data_rows(&out_a.join("train_manifest.csv")), 4);
    assert_eq!(data_rows(&out_a.join("validation_manifest.csv")), 2);
    assert_eq!(data_rows(&out_a.join("test_manifest.csv")), 2);
    for name in ["train_manifest.csv", "validation_manifest.csv", "test_manifest.csv"] {
        assert_eq!(
            fs::read(out_a.join(name)).unwrap(),
            fs::read(out_b.join(name)).unwrap(),
            "{name} differs between identically seeded runs"
        );
    }
}

#[test]
fn split_prints_class_totals_of_a_full_sized_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("davidson.csv");
    {
        let mut w = csv::Writer::from_path(&input).unwrap();
        w.write_record(["tweet", "class"]).unwrap();
        for (code, count) in [(0usize, 1430usize), (1, 19190), (2, 4163)] {
            for i in 0..count {
                w.write_record([format!("tweet {code} {i}"), code.to_string()])
                    .unwrap();
            }
        }
        w.flush().unwrap();
    }

    let out_dir = dir.path().join("out");
    let out = run(&[
        "split",
        "--dataset",
        "davidson",
        "--davidson",
        input.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert_success(&out);

    let stdout = stdout_of(&out);
    let totals = stdout
        .lines()
        .find(|l| l.starts_with("Total"))
        .expect("distribution table should end with a totals row");
    for expected in ["1430", "19190", "4163"] {
        assert!(totals.contains(expected), "missing {expected} in {totals:?}");
    }
}

#[test]
fn unknown_head_is_a_usage_error() {
    let out = run(&["train", "--head", "quadratic"]);
    assert_eq!(out.status.code(), Some(2));
}

struct TrainedRun {
    out_dir: PathBuf,
}

/// Splits + trains the keyword fixture with fixed seeds into `out_dir`.
fn train_keyword_fixture(input: &Path, out_dir: &Path, extra: &[&str]) -> TrainedRun {
    let split = run(&[
        "split",
        "--waseem-hovy",
        input.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert_success(&split);

    let mut args = vec![
        "train",
        "--waseem-hovy",
        input.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--backend",
        "mini",
        "--split-seed",
        "3",
        "--seed",
        "9",
        "--epochs",
        "60",
        "--batch-size",
        "8",
        "--learning-rate",
        "0.003",
        "--max-len",
        "8",
        "--dropout",
        "0",
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert_success(&out);
    assert!(stdout_of(&out).contains("train_done"));
    TrainedRun {
        out_dir: out_dir.to_path_buf(),
    }
}

fn eval_run(input: &Path, run_dir: &TrainedRun, manifest: &str, eval_dir: &Path) -> Output {
    run(&[
        "eval",
        "--waseem-hovy",
        input.to_str().unwrap(),
        "--checkpoint",
        run_dir.out_dir.join("checkpoint").to_str().unwrap(),
        "--manifest",
        run_dir.out_dir.join(manifest).to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ])
}

#[test]
fn config_file_values_lose_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_labeled_csv(&input, &keyword_rows(10));
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        r#"{"head": {"kind": "linear"}, "train": {"epochs": 1, "batch_size": 4}}"#,
    )
    .unwrap();

    let out_dir = dir.path().join("out");
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--waseem-hovy",
        input.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--head",
        "cnn",
        "--max-len",
        "8",
    ]);
    assert_success(&out);

    let resolved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("resolved_config.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["head"]["kind"], "cnn");
    assert_eq!(resolved["train"]["epochs"], 1);
    assert_eq!(resolved["train"]["batch_size"], 4);

    let history = fs::read_to_string(out_dir.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_loss,val_f1\n"));
    assert_eq!(history.lines().count(), 2);
}

#[test]
fn freeze_encoder_leaves_initial_weights_in_place() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_labeled_csv(&input, &keyword_rows(10));
    let trained = train_keyword_fixture(&input, &dir.path().join("out"), &["--freeze-encoder"]);

    let ckpt_dir = trained.out_dir.join("checkpoint");
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ckpt_dir.join("checkpoint.json")).unwrap())
            .unwrap();
    assert_eq!(doc["encoder"]["source"], "mini_config");

    let loaded = load_checkpoint(&ckpt_dir, None).unwrap();
    let cfg: EncoderConfig = serde_json::from_value(doc["encoder"]["config"].clone()).unwrap();
    let fresh = Transformer::build_mini(cfg).unwrap();
    assert_eq!(loaded.model.encoder.params, fresh.params);
}

#[test]
fn memorized_fixture_evals_perfectly_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_labeled_csv(&input, &keyword_rows(10));

    let mut artifacts: Vec<(Vec<u8>, Vec<u8>, Vec<u8>)> = Vec::new();
    for run_name in ["one", "two"] {
        let out_dir = dir.path().join(run_name);
        let trained = train_keyword_fixture(&input, &out_dir, &[]);
        let eval_dir = dir.path().join(format!("{run_name}_eval"));
        let out = eval_run(&input, &trained, "test_manifest.csv", &eval_dir);
        assert_success(&out);
        artifacts.push((
            fs::read(out_dir.join("history.csv")).unwrap(),
            fs::read(eval_dir.join("metrics.json")).unwrap(),
            fs::read(eval_dir.join("confusion_counts.csv")).unwrap(),
        ));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "history.csv differs");
    assert_eq!(artifacts[0].1, artifacts[1].1, "metrics.json differs");
    assert_eq!(artifacts[0].2, artifacts[1].2, "confusion_counts.csv differs");

    let metrics: serde_json::Value = serde_json::from_slice(&artifacts[0].1).unwrap();
    assert_eq!(metrics["weighted"]["f1"].as_f64().unwrap(), 1.0);
    assert_eq!(metrics["accuracy"].as_f64().unwrap(), 1.0);
}

#[test]
fn eval_rejects_checkpoint_from_another_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_labeled_csv(&input, &keyword_rows(10));
    let trained = train_keyword_fixture(&input, &dir.path().join("out"), &[]);

    let davidson = dir.path().join("davidson.csv");
    {
        let mut w = csv::Writer::from_path(&davidson).unwrap();
        w.write_record(["tweet", "class"]).unwrap();
        for i in 0..9 {
            w.write_record([format!("tweet {i}"), (i % 3).to_string()])
                .unwrap();
        }
        w.flush().unwrap();
    }

    let out = run(&[
        "eval",
        "--dataset",
        "davidson",
        "--davidson",
        davidson.to_str().unwrap(),
        "--checkpoint",
        trained.out_dir.join("checkpoint").to_str().unwrap(),
        "--manifest",
        trained.out_dir.join("test_manifest.csv").to_str().unwrap(),
        "--out",
        dir.path().join("eval").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(stderr_of(&out).trim()).unwrap();
    assert_eq!(err["error"]["code"], "scheme_mismatch");
}
