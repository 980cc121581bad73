use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use comom::augment::AugmentSpec;
use comom::backends::{
    classify_quadruples, connect_external, tag_tokens, BackendDescriptor, BackendKind, Capability, ConnectOptions,
    MockBackend, Transport,
};
use comom::ingest::{export_dataset, read_dataset};
use comom::synthetic::{synthetic_corpus, SyntheticConfig};
use comom::{ComparisonLabel, Dataset, Quintuple, Sentence, TokenSpan};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_comom");

fn comom(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("COMOM_CONFIG").output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap_or_default()).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn transcripts() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/transcripts")
}

fn write_corpus(path: &Path, sentences: usize, seed: u64) -> Dataset {
    let data = synthetic_corpus(&SyntheticConfig { sentences, seed, ..Default::default() });
    export_dataset(&data, path).unwrap();
    data
}

#[test]
fn eval_of_gold_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.jsonl");
    write_corpus(&gold, 40, 1);
    let report_path = dir.path().join("report.json");
    let out = comom(&["eval", p(&gold), p(&gold), "--json", "-o", p(&report_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["macro_f1"], 1.0);
    let provenance = &report["provenance"];
    assert_eq!(provenance["command"], "eval");
    assert_eq!(provenance["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(provenance["config_hash"].as_str().unwrap().len(), 64);
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(written, report);

    let table = comom(&["eval", p(&gold), p(&gold)]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("MACRO-F1"));
}

#[test]
fn eval_with_different_ids_is_a_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    write_corpus(&a, 10, 1);
    write_corpus(&b, 10, 2);
    let out = comom(&["eval", p(&a), p(&b)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "IdMismatch");
}

fn long_predicate_file(dir: &Path) -> PathBuf {
    let words: Vec<String> = (0..14).map(|i| format!("w{i}")).collect();
    let q = Quintuple {
        subject: Some(TokenSpan::single(0)),
        object: Some(TokenSpan::single(13)),
        aspect: None,
        predicate: Some(TokenSpan::new(1, 12)),
        label: ComparisonLabel::ComPos,
    };
    let data = Dataset::new(vec![
        Sentence::from_words("long", &words, vec![q]).unwrap(),
        Sentence::new("plain", "máy này ổn", vec![]).unwrap(),
    ])
    .unwrap();
    let path = dir.join("long.jsonl");
    export_dataset(&data, &path).unwrap();
    path
}

#[test]
fn lint_flags_a_twelve_token_predicate() {
    let dir = tempfile::tempdir().unwrap();
    let path = long_predicate_file(dir.path());
    let out = comom(&["lint", p(&path), "--json"]);
    assert_eq!(out.status.code(), Some(1));
    let report = stdout_json(&out);
    let findings = report["findings"].as_array().unwrap();
    assert_eq!(findings.len(), 1, "{report}");
    assert_eq!(findings[0]["rule"], "R1");
    assert_eq!(findings[0]["sentence"], "long");

    let relaxed = comom(&["lint", p(&path), "--max-predicate-tokens", "12"]);
    assert_eq!(relaxed.status.code(), Some(0));
}

#[test]
fn config_file_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = long_predicate_file(dir.path());
    let config = dir.path().join("comom.json");
    std::fs::write(&config, r#"{"lint": {"max_predicate_tokens": 20}}"#).unwrap();
    let out = Command::new(BIN).args(["lint", p(&path)]).env("COMOM_CONFIG", &config).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let flag_wins = Command::new(BIN)
        .args(["lint", p(&path), "--max-predicate-tokens", "5"])
        .env("COMOM_CONFIG", &config)
        .output()
        .unwrap();
    assert_eq!(flag_wins.status.code(), Some(1));

    std::fs::write(&config, r#"{"lint": {"max_predicate_tokens": 20}, "colour": true}"#).unwrap();
    let bad = Command::new(BIN).args(["lint", p(&path)]).env("COMOM_CONFIG", &config).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(stderr_json(&bad)["error"], "InvalidConfig");
}

#[test]
fn augmented_version3_matches_its_targets() {
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("source.jsonl");
    write_corpus(&source, 300, 3);
    let v3 = dir.path().join("v3.jsonl");
    let out = comom(&["augment", p(&source), "--version", "v3", "--seed", "5", "-o", p(&v3)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let stats = comom(&["stats", p(&v3), "--json"]);
    assert_eq!(stats.status.code(), Some(0));
    let stats = stdout_json(&stats);
    let targets = AugmentSpec::version3(0).targets;
    for (i, label) in ComparisonLabel::ALL.into_iter().enumerate() {
        assert_eq!(stats["labels"][i]["label"], label.as_str());
        assert_eq!(stats["labels"][i]["count"], targets[&label], "{label}");
    }

    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("v3.jsonl.provenance.json")).unwrap()).unwrap();
    assert_eq!(sidecar["seed"], 5);
    assert_eq!(sidecar["config"]["spec"]["version"], "v3");

    let again = dir.path().join("again.jsonl");
    comom(&["augment", p(&source), "--version", "v3", "--seed", "5", "-o", p(&again)]);
    assert_eq!(std::fs::read(&v3).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn clean_normalizes_and_keeps_records() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    std::fs::write(
        &raw,
        "{\"id\":\"a\",\"text\":\"A\u{00A0} tốt\u{200B} hơn  B\",\"quintuples\":[{\"subject\":[0,0],\"object\":[3,3],\"aspect\":null,\"predicate\":[1,2],\"label\":\"COM+\"}]}\n",
    )
    .unwrap();
    let clean = dir.path().join("clean.jsonl");
    let out = comom(&["clean", p(&raw), p(&clean)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let data = read_dataset(&clean).unwrap();
    assert_eq!(data.sentences()[0].text(), "A tốt hơn B");
    assert!(Path::new(&format!("{}.provenance.json", clean.display())).is_file());
}

#[test]
fn usage_and_runtime_errors_are_json() {
    let usage = comom(&["eval", "only-one.jsonl"]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(stderr_json(&usage)["error"], "UsageError");

    let missing = comom(&["stats", "/nonexistent/data.jsonl"]);
    assert_eq!(missing.status.code(), Some(3));
    let err = stderr_json(&missing);
    assert_eq!(err["error"], "Io");
    assert!(err["message"].as_str().unwrap().contains("/nonexistent/data.jsonl"));

    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.jsonl");
    std::fs::write(&broken, "{\"id\":\"a\",\"text\":\"x\",\"quintuples\":[]}\nnot json\n{\"id\":\"a\",\"text\":\"y\",\"quintuples\":[]}\n").unwrap();
    let invalid = comom(&["stats", p(&broken)]);
    assert_eq!(invalid.status.code(), Some(3));
    let err = stderr_json(&invalid);
    assert_eq!(err["error"], "InvalidRecords");
    assert_eq!(err["details"].as_array().unwrap().len(), 2);
    let lint = comom(&["lint", p(&broken), "--json"]);
    assert_eq!(lint.status.code(), Some(1));
    assert_eq!(stdout_json(&lint)["findings"].as_array().unwrap().len(), 2);
}

#[test]
fn train_predict_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train = d.join("train.jsonl");
    let test = d.join("test.jsonl");
    write_corpus(&train, 150, 21);
    write_corpus(&test, 40, 22);
    let fast = ["--learning-rate", "0.01", "--epochs", "8", "--seed", "3"];
    let run = |args: &[&str]| {
        let out = comom(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    for (task, profile, file) in [("tag", "words", "words.bin"), ("tag", "chars", "chars.bin"), ("tag", "full", "full.bin")] {
        run(&[&["train", task, p(&train), "-o", p(&d.join(file)), "--profile", profile], &fast[..]].concat());
    }
    let out = run(&[&["train", "quadruple", p(&train), "-o", p(&d.join("stage3.json")), "--bootstrap", "3"], &fast[..]].concat());
    assert_eq!(stdout_json(&out)["members"], 3);
    run(&[&["train", "sentence", p(&train), "-o", p(&d.join("stage1.bin"))], &fast[..]].concat());
    assert!(d.join("stage3.m2.bin").is_file() && d.join("stage1.bin.provenance.json").is_file());

    std::fs::write(
        d.join("pipeline.json"),
        r#"{"stage1_mode": "binary", "stage1": "stage1.bin", "stage2": ["words.bin", "chars.bin", "full.bin"], "stage3": "stage3.json"}"#,
    )
    .unwrap();
    let one = d.join("pred1.jsonl");
    let three = d.join("pred3.jsonl");
    let out = run(&["predict", p(&test), "--pipeline", p(&d.join("pipeline.json")), "-o", p(&one)]);
    assert_eq!(stdout_json(&out)["sentences"], 40);
    run(&["predict", p(&test), "--pipeline", p(&d.join("pipeline.json")), "-o", p(&three), "--workers", "3"]);
    assert_eq!(std::fs::read(&one).unwrap(), std::fs::read(&three).unwrap());

    let report = stdout_json(&run(&["eval", p(&test), p(&one), "--json"]));
    let f1 = report["macro_f1"].as_f64().unwrap();
    assert!(f1 > 0.5, "{report}");
}

fn load_transcript(name: &str) -> (String, Vec<String>) {
    let text = std::fs::read_to_string(transcripts().join(name)).unwrap();
    let mut sent = String::new();
    let mut expected = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('>') {
            sent.push_str(rest.strip_prefix(' ').unwrap_or(rest));
            sent.push('\n');
        } else if let Some(rest) = line.strip_prefix("< ") {
            expected.push(rest.to_string());
        }
    }
    (sent, expected)
}

#[test]
fn mock_server_process_replays_the_transcripts() {
    let fixture = transcripts().join("mock.json");
    for name in ["hello.ndjson", "shapes.ndjson", "errors.ndjson"] {
        let (sent, expected) = load_transcript(name);
        let mut child = Command::new(BIN)
            .args(["mock-serve", p(&fixture), "--quiet"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(sent.as_bytes()).unwrap();
        let mut out = String::new();
        child.stdout.take().unwrap().read_to_string(&mut out).unwrap();
        assert!(child.wait().unwrap().success());
        let got: Vec<&str> = out.lines().collect();
        assert_eq!(got.len(), expected.len(), "{name}: {out}");
        for (g, w) in got.iter().zip(&expected) {
            let want: Value = serde_json::from_str(w).unwrap();
            if want["type"] == "error" {
                let g: Value = serde_json::from_str(g).unwrap();
                assert_eq!((&g["type"], &g["id"]), (&want["type"], &want["id"]), "{name}");
            } else {
                assert_eq!(g, w, "{name}");
            }
        }
    }
}

#[test]
fn client_drives_a_child_process_backend() {
    let fixture = transcripts().join("mock.json");
    let descriptor = BackendDescriptor {
        name: "child".into(),
        capabilities: BTreeSet::from([Capability::Token9Tag, Capability::Quintuple9Label]),
        kind: BackendKind::External {
            transport: Transport::ChildProcess {
                program: BIN.into(),
                args: vec!["mock-serve".into(), p(&fixture).into(), "--quiet".into()],
            },
        },
    };
    let client = connect_external(&descriptor, &ConnectOptions::default()).unwrap();
    let local = MockBackend::from_json(&std::fs::read_to_string(&fixture).unwrap()).unwrap();
    let batch = vec![Sentence::new("a", "iPhone 15 pin trâu hơn Galaxy", vec![]).unwrap()];
    assert_eq!(tag_tokens(&client, &batch).unwrap(), tag_tokens(&local, &batch).unwrap());
    let quad = comom::Quadruple { subject: Some(TokenSpan::new(0, 1)), ..Default::default() };
    assert_eq!(
        classify_quadruples(&client, &batch[0], &[quad]).unwrap(),
        classify_quadruples(&local, &batch[0], &[quad]).unwrap()
    );
}

#[test]
fn served_native_model_matches_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let data = write_corpus(&train, 60, 9);
    let model = dir.path().join("tagger.bin");
    let out = comom(&["train", "tag", p(&train), "-o", p(&model), "--epochs", "2", "--learning-rate", "0.01"]);
    assert_eq!(out.status.code(), Some(0));
    let descriptor = BackendDescriptor {
        name: "served".into(),
        capabilities: BTreeSet::from([Capability::Token9Tag]),
        kind: BackendKind::External {
            transport: Transport::ChildProcess { program: BIN.into(), args: vec!["serve".into(), p(&model).into(), "-q".into()] },
        },
    };
    let client = connect_external(&descriptor, &ConnectOptions::default()).unwrap();
    let local = comom::backends::NativeModel::load(&model).unwrap();
    let batch = &data.sentences()[..5];
    let remote = tag_tokens(&client, batch).unwrap();
    let direct = tag_tokens(&local, batch).unwrap();
    for (r, l) in remote.iter().zip(&direct) {
        for (a, b) in r.0.iter().zip(&l.0) {
            assert_eq!(a.0, b.0);
        }
    }
}

#[test]
fn experiment_preset_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_corpus(&data.join("v2.jsonl"), 120, 41);
    let out_dir = dir.path().join("e2");
    let out = comom(&["experiment", "e2", "--data", p(&data), "-o", p(&out_dir), "--learning-rate", "0.01", "--epochs", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("MACRO-F1"));
    let provenance: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(provenance["config"]["experiment"]["preset"], "E2");
    assert_eq!(provenance["config"]["experiment"]["train"]["learning_rate"], 0.01);
    assert!(out_dir.join("report.json").is_file() && out_dir.join("stage1.bin").is_file());

    let missing = comom(&["experiment", "E5", "--data", p(&data), "-o", p(&dir.path().join("e5"))]);
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(stderr_json(&missing)["error"], "MissingDatasetVersion");
}
