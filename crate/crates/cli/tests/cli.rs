//! End-to-end tests of the command-line interface, including exit codes.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_redactprobe"))
}

fn run_with_stdin(args: &[&str], stdin: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn");
    // A broken pipe just means the child exited before reading stdin, which
    // some tests expect (bad-input exits).
    let _ = child.stdin.as_mut().unwrap().write_all(stdin.as_bytes());
    child.wait_with_output().expect("wait")
}

fn generate_corpus(dir: &Path, per_class: usize, seed: u64) -> std::path::PathBuf {
    let corpus = dir.join("corpus.json");
    let out = bin()
        .args([
            "generate",
            "--seed",
            &seed.to_string(),
            "--per-class",
            &per_class.to_string(),
            "--out",
        ])
        .arg(&corpus)
        .output()
        .unwrap();
    assert!(out.status.success());
    corpus
}

#[test]
fn generate_then_ingest_produces_samples_and_stats() {
    let dir = TempDir::new().unwrap();
    let corpus = generate_corpus(dir.path(), 5, 1);
    let samples = dir.path().join("samples.jsonl");
    let stats = dir.path().join("stats.json");
    let out = bin()
        .args(["ingest", "--corpus"])
        .arg(&corpus)
        .arg("--samples-out")
        .arg(&samples)
        .arg("--stats-out")
        .arg(&stats)
        .output()
        .unwrap();
    assert!(out.status.success());

    let lines: Vec<String> = fs::read_to_string(&samples)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(lines.len(), 40);
    let first: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    for key in ["doc", "sentence", "redacted", "start", "len", "label"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }

    let stats_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(stats_json["PERSON"], 5);
}

#[test]
fn ingest_of_empty_corpus_writes_empty_samples_and_zero_stats() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("empty.json");
    fs::write(&corpus, "[]").unwrap();
    let samples = dir.path().join("samples.jsonl");
    let out = bin()
        .args(["ingest", "--corpus"])
        .arg(&corpus)
        .arg("--samples-out")
        .arg(&samples)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&samples).unwrap(), "");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("\"DATETIME\": 0"));
}

#[test]
fn malformed_corpus_json_exits_2_with_position() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("bad.json");
    fs::write(&corpus, "[{\"id\": }").unwrap();
    let out = bin()
        .args(["ingest", "--corpus"])
        .arg(&corpus)
        .arg("--samples-out")
        .arg(dir.path().join("s.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("byte"), "stderr: {stderr}");
}

#[test]
fn out_of_range_annotation_exits_2_naming_the_document() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("bad.json");
    fs::write(
        &corpus,
        r#"[{"id": "d9", "text": "abc", "revised": false, "target": "person",
            "annotations": [{"start": 0, "end": 4, "label": "LOC", "identifier": "quasi"}]}]"#,
    )
    .unwrap();
    let out = bin()
        .args(["ingest", "--corpus"])
        .arg(&corpus)
        .arg("--samples-out")
        .arg(dir.path().join("s.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("d9"));
}

#[test]
fn harden_fold_round_trip_through_stdio() {
    let hardened = run_with_stdin(&["harden"], "nation state\n");
    assert!(hardened.status.success());
    let hardened_text = String::from_utf8(hardened.stdout).unwrap();
    assert_eq!(hardened_text, "ոаtіоո stаtе\n");

    let folded = run_with_stdin(&["fold"], &hardened_text);
    assert_eq!(String::from_utf8(folded.stdout).unwrap(), "nation state\n");
}

#[test]
fn detect_reports_positions_as_json_lines() {
    let out = run_with_stdin(&["detect"], "ոаtіоո");
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 5);
    let first: serde_json::Value = serde_json::from_str(stdout.lines().next().unwrap()).unwrap();
    assert_eq!(first["position"], 0);
    assert_eq!(first["original"], "n");
}

#[test]
fn text_subcommands_accept_file_input_and_output() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("plain.txt");
    fs::write(&input, "nation").unwrap();
    let hardened = dir.path().join("hard.txt");
    let out = bin()
        .args(["harden", "--in"])
        .arg(&input)
        .arg("--out")
        .arg(&hardened)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&hardened).unwrap(), "ոаtіоո");
    let out = bin().args(["fold", "--in"]).arg(&hardened).output().unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "nation");
}

#[test]
fn malformed_map_exits_2() {
    let dir = TempDir::new().unwrap();
    let map = dir.path().join("map.json");
    fs::write(&map, r#"[{"from": "U+0041", "to": "U+0430"}]"#).unwrap();
    let map_arg = map.to_str().unwrap();
    let out = run_with_stdin(&["harden", "--map", map_arg], "abc");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn custom_map_is_honoured() {
    let dir = TempDir::new().unwrap();
    let map = dir.path().join("map.json");
    fs::write(&map, r#"[{"from": "U+0078", "to": "U+0445"}]"#).unwrap(); // x -> х
    let map_arg = map.to_str().unwrap();
    let out = run_with_stdin(&["harden", "--map", map_arg], "axe nation");
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "aхe nation");
}

#[test]
fn bad_mode_or_model_flags_exit_2() {
    let dir = TempDir::new().unwrap();
    let corpus = generate_corpus(dir.path(), 4, 2);
    let out = bin()
        .args(["run", "--corpus"])
        .arg(&corpus)
        .args(["--mode", "sideways", "--model", "dnn", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin()
        .args(["run", "--corpus"])
        .arg(&corpus)
        .args(["--mode", "baseline", "--model", "svm", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn desk_config() -> &'static str {
    r#"{"mode":"baseline","seed":0,"finetune_per_label":4,"smote_target":14,
        "finetune_epochs":2,"train":{"epochs":2,"batch":32,"lr":0.001},
        "rf":{"n_estimators":20,"criterion":"gini","max_depth":null}}"#
}

fn run_pipeline_cli(dir: &Path, corpus: &Path, out_dir: &str, model: &str, seed: u64) -> Output {
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, desk_config()).unwrap();
    bin()
        .args(["run", "--corpus"])
        .arg(corpus)
        .args(["--mode", "baseline", "--model", model, "--seed", &seed.to_string(), "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.join(out_dir))
        .output()
        .unwrap()
}

#[test]
fn run_writes_reports_and_model_artifacts() {
    let dir = TempDir::new().unwrap();
    let corpus = generate_corpus(dir.path(), 12, 3);
    let out = run_pipeline_cli(dir.path(), &corpus, "out", "rf", 5);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics[0]["model"], "rf");
    assert_eq!(metrics[0]["mode"], "baseline");
    assert_eq!(metrics[0]["seed"], 5);
    assert!(dir.path().join("out/model-rf.bin").exists());
    assert!(dir.path().join("out/projection.bin").exists());
    assert!(dir.path().join("out/balance.json").exists());

    // The report pretty-printers accept both files.
    let report = bin()
        .args(["report", "--metrics"])
        .arg(dir.path().join("out/metrics.json"))
        .output()
        .unwrap();
    assert!(report.status.success());
    assert!(String::from_utf8(report.stdout).unwrap().contains("baseline"));
    let report = bin()
        .args(["report", "--balance"])
        .arg(dir.path().join("out/balance.json"))
        .output()
        .unwrap();
    assert!(report.status.success());
    assert!(String::from_utf8(report.stdout).unwrap().contains("Total"));
}

#[test]
fn identical_runs_produce_byte_identical_artifacts() {
    let dir = TempDir::new().unwrap();
    let corpus = generate_corpus(dir.path(), 12, 4);
    let a = run_pipeline_cli(dir.path(), &corpus, "out-a", "rf", 9);
    let b = run_pipeline_cli(dir.path(), &corpus, "out-b", "rf", 9);
    assert!(a.status.success() && b.status.success());
    for name in ["metrics.json", "balance.json", "model-rf.bin", "projection.bin"] {
        let left = fs::read(dir.path().join("out-a").join(name)).unwrap();
        let right = fs::read(dir.path().join("out-b").join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical runs");
    }
}

#[test]
fn attack_emits_one_prediction_per_redaction() {
    let dir = TempDir::new().unwrap();
    let corpus = generate_corpus(dir.path(), 12, 5);
    let run = run_pipeline_cli(dir.path(), &corpus, "out", "rf", 6);
    assert!(run.status.success());

    let doc = dir.path().join("doc.txt");
    fs::write(&doc, "It happened on **********. ***** was in *********.").unwrap();
    let out = bin()
        .args(["attack", "--model"])
        .arg(dir.path().join("out/model-rf.bin"))
        .arg("--projection")
        .arg(dir.path().join("out/projection.bin"))
        .arg("--doc")
        .arg(&doc)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3);
    let first: serde_json::Value = serde_json::from_str(stdout.lines().next().unwrap()).unwrap();
    assert_eq!(first["start"], 15);
    assert_eq!(first["len"], 10);
    assert_eq!(first["scores"].as_array().unwrap().len(), 8);

    // A document without redactions yields an empty prediction list.
    let clean = dir.path().join("clean.txt");
    fs::write(&clean, "No redactions in this text.").unwrap();
    let out = bin()
        .args(["attack", "--model"])
        .arg(dir.path().join("out/model-rf.bin"))
        .arg("--doc")
        .arg(&clean)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn embeddings_export_then_import_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let corpus = generate_corpus(dir.path(), 12, 6);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, desk_config()).unwrap();

    let out = bin()
        .args(["run", "--corpus"])
        .arg(&corpus)
        .args(["--mode", "baseline", "--model", "rf", "--seed", "7", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("out-x"))
        .arg("--embeddings-out")
        .arg(dir.path().join("base.emb"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin()
        .args(["run", "--corpus"])
        .arg(&corpus)
        .args(["--mode", "baseline", "--model", "rf", "--seed", "7", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("out-y"))
        .arg("--embeddings")
        .arg(dir.path().join("base.emb"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // f32 rounding in the embedding file makes runs near- but not bit-equal;
    // the metrics schema and counts must match.
    let x: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out-x/metrics.json")).unwrap())
            .unwrap();
    let y: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out-y/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(x[0]["model"], y[0]["model"]);
    let bx: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out-x/balance.json")).unwrap())
            .unwrap();
    let by: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out-y/balance.json")).unwrap())
            .unwrap();
    assert_eq!(bx, by);
}

#[test]
fn run_with_evasion_map_adds_an_evasion_row() {
    let dir = TempDir::new().unwrap();
    let corpus = generate_corpus(dir.path(), 12, 7);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, desk_config()).unwrap();
    let map = dir.path().join("map.json");
    fs::write(
        &map,
        r#"[{"from": "U+0061", "to": "U+0430"}, {"from": "U+0065", "to": "U+0435"},
           {"from": "U+0069", "to": "U+0456"}, {"from": "U+006E", "to": "U+0578"},
           {"from": "U+006F", "to": "U+043E"}]"#,
    )
    .unwrap();
    let out = bin()
        .args(["run", "--corpus"])
        .arg(&corpus)
        .args(["--mode", "baseline", "--model", "rf", "--seed", "8", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .arg("--evasion-map")
        .arg(&map)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics.as_array().unwrap().len(), 2);
    assert_eq!(metrics[1]["mode"], "evasion");
}
