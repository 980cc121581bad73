//! Augmentation, ensembling, pipeline and experiment workflows through the
//! public API.

use std::path::Path;
use std::sync::Arc;

use comom::augment::{
    build_dictionaries, generate_dataset, label_counts, labels_follow_predicates, merge_wordlist_dir,
    synthesize_sentence, AugmentSpec, TargetBasis,
};
use comom::backends::{tag_tokens, Backend, Capability, ConnectOptions, FeatureConfig, MockBackend, MockFixture, TrainConfig};
use comom::ensemble::{
    bootstrap_train, combine_weighted, make_folds, EnsembleBackend, EnsembleKind, EnsembleManifest, EnsembleWeights,
};
use comom::ingest::{export_dataset, parse_canonical, read_dataset, write_canonical};
use comom::pipeline::{
    generate_quadruples, run_experiment, run_pipeline, DecodePolicy, ElementSets, ExperimentPreset, ModelRef,
    PipelineBackends, PipelineConfig, Stage1Mode,
};
use comom::synthetic::{synthetic_corpus, SyntheticConfig};
use comom::{ComparisonLabel, Dataset, LogitVector, Quintuple, Sentence, TokenSpan};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn span(i: usize, j: usize) -> Option<TokenSpan> {
    Some(TokenSpan::new(i, j))
}

fn a_tot_hon_b(id: &str, label: ComparisonLabel) -> Sentence {
    let q = Quintuple { subject: span(0, 0), object: span(3, 3), aspect: None, predicate: span(1, 2), label };
    Sentence::new(id, "A tốt hơn B", vec![q]).unwrap()
}

#[test]
fn conflicting_predicate_is_listed_under_both_labels() {
    let data = Dataset::new(vec![a_tot_hon_b("1", ComparisonLabel::ComPos), a_tot_hon_b("2", ComparisonLabel::Com)]).unwrap();
    let built = build_dictionaries(&data).unwrap();
    assert_eq!(built.dictionaries.predicates(ComparisonLabel::ComPos), ["tốt hơn"]);
    assert_eq!(built.dictionaries.predicates(ComparisonLabel::Com), ["tốt hơn"]);
    assert_eq!(built.warnings.len(), 1);
    assert_eq!(built.warnings[0].labels, [ComparisonLabel::ComPos, ComparisonLabel::Com]);
}

#[test]
fn predicate_bucket_decides_the_label() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("predicates.SUP-.txt"), "# worst\ntệ nhất\n").unwrap();
    let data = Dataset::new(vec![a_tot_hon_b("1", ComparisonLabel::ComPos)]).unwrap();
    let mut dicts = build_dictionaries(&data).unwrap().dictionaries;
    dicts = merge_wordlist_dir(dicts, dir.path()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut seen_sup_neg = 0;
    for _ in 0..50 {
        let s = synthesize_sentence(&data.sentences()[0], &dicts, &mut rng).unwrap();
        let q = s.quintuples()[0];
        if s.span_text(q.predicate.unwrap()) == "tệ nhất" {
            assert_eq!(q.label, ComparisonLabel::SupNeg);
            seen_sup_neg += 1;
        } else {
            assert_eq!(q.label, ComparisonLabel::ComPos);
        }
        assert!(labels_follow_predicates(&s, &dicts));
    }
    assert!(seen_sup_neg > 0);
}

#[test]
fn version2_targets_and_reimport() {
    let source = synthetic_corpus(&SyntheticConfig { sentences: 300, seed: 4, ..Default::default() });
    let dicts = build_dictionaries(&source).unwrap().dictionaries;
    let spec = AugmentSpec::version2(4);
    assert_eq!(spec.basis, TargetBasis::Combined);
    let v2 = generate_dataset(&source, &dicts, &spec).unwrap();
    let counts = label_counts(&v2);
    assert_eq!(counts[&ComparisonLabel::SupNeg], 288);
    assert_eq!(counts[&ComparisonLabel::Sup], 308);
    assert_eq!(counts[&ComparisonLabel::ComPos], 2980);
    assert_eq!(v2.provenance.seed, Some(4));

    let mut bytes = Vec::new();
    write_canonical(&v2, &mut bytes).unwrap();
    let again = parse_canonical(bytes.as_slice()).unwrap();
    assert!(again.warnings.is_empty());
    assert_eq!(again.dataset.sentences(), v2.sentences());
    assert!(v2.iter().all(|s| labels_follow_predicates(s, &dicts)));
    assert_eq!(generate_dataset(&source, &dicts, &spec).unwrap(), v2);
}

#[test]
fn two_per_label_synthetic_targets() {
    let source = synthetic_corpus(&SyntheticConfig { sentences: 100, seed: 8, ..Default::default() });
    let dicts = build_dictionaries(&source).unwrap().dictionaries;
    let spec = AugmentSpec::new(ComparisonLabel::ALL.map(|l| (l, 2)), 7);
    let out = generate_dataset(&source, &dicts, &spec).unwrap();
    let synthetic = Dataset::new(out.sentences()[source.len()..].to_vec()).unwrap();
    assert!(label_counts(&synthetic).values().all(|&n| n == 2));
    assert_eq!(synthetic.iter().map(|s| s.quintuples().len()).sum::<usize>(), 16);
}

#[test]
fn published_weighted_example() {
    let one_hot = |i| LogitVector::one_hot(9, i);
    let combined =
        combine_weighted(&[one_hot(0), one_hot(1), one_hot(1)], &EnsembleWeights::stage2_default()).unwrap();
    assert_eq!(&combined.0[..2], &[0.2, 0.8]);
    assert!(combined.0[2..].iter().all(|&v| v == 0.0));
}

#[test]
fn bootstrap_manifest_round_trip() {
    let data = synthetic_corpus(&SyntheticConfig { sentences: 90, seed: 5, ..Default::default() });
    let plan = make_folds(&data, 3, 5).unwrap();
    let train = TrainConfig { learning_rate: 1e-2, epochs: 3, ..TrainConfig::default() };
    let ensemble = bootstrap_train(Capability::Token9Tag, &data, &plan, &train, FeatureConfig::default()).unwrap();
    for v in &ensemble.validation {
        assert!((v.train_sentences as f64 - 2.0 * 90.0 / 3.0).abs() <= 1.0, "{v:?}");
        assert_eq!(v.train_sentences + v.validation_sentences, 90);
        assert!(v.accuracy.is_some_and(|a| a > 0.5), "{v:?}");
    }
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = dir.path().join("tagger.json");
    let manifest = ensemble.save(&manifest_path).unwrap();
    assert_eq!((manifest.kind, manifest.members.len()), (EnsembleKind::Bootstrap, 3));
    assert_eq!(EnsembleManifest::read(&manifest_path).unwrap(), manifest);
    let in_memory = ensemble.into_backend("mem").unwrap();
    let loaded = EnsembleBackend::load(&manifest_path, &ConnectOptions::default()).unwrap();
    assert_eq!(loaded.weights().as_slice(), [1.0 / 3.0; 3]);
    let batch = &data.sentences()[..10];
    assert_eq!(tag_tokens(&loaded, batch).unwrap(), tag_tokens(&in_memory, batch).unwrap());
}

#[test]
fn one_element_per_set_gives_one_quadruple() {
    let sets = ElementSets { subject: vec![TokenSpan::single(0)], object: vec![TokenSpan::single(3)], aspect: vec![TokenSpan::single(1)], predicate: vec![TokenSpan::single(2)] };
    let g = generate_quadruples(&sets, 256).unwrap();
    assert_eq!(g.quads.len(), 1);
    let q = g.quads[0];
    assert_eq!((q.subject, q.object, q.aspect, q.predicate), (span(0, 0), span(3, 3), span(1, 1), span(2, 2)));
}

fn mock_pipeline() -> (PipelineConfig, PipelineBackends) {
    let fixture = MockFixture {
        tags: [("iPhone", "B-SUB"), ("15", "I-SUB"), ("hơn", "B-PRED"), ("Galaxy", "B-OBJ")]
            .into_iter()
            .map(|(w, t)| (w.to_string(), t.to_string()))
            .collect(),
        quadruple: LogitVector::one_hot(9, ComparisonLabel::ComPos.index()).0,
        ..Default::default()
    };
    let mock: Arc<dyn Backend> = Arc::new(MockBackend::new(fixture).unwrap());
    let config = PipelineConfig {
        stage1_mode: Stage1Mode::TaggerDerived,
        stage1: None,
        stage2: vec![ModelRef::Path("mock".into())],
        stage2_weights: None,
        stage3: ModelRef::Path("mock".into()),
        max_quadruples: 256,
        decode: DecodePolicy::Lenient,
    };
    (config, PipelineBackends { stage1: None, stage2: mock.clone(), stage3: mock })
}

#[test]
fn mock_pipeline_keeps_order_and_is_reproducible() {
    let data = Dataset::new(vec![
        Sentence::new("c", "Nhìn iPhone 15 thì hơn", vec![]).unwrap(),
        Sentence::new("a", "shop giao nhanh", vec![]).unwrap(),
        Sentence::new("b", "iPhone 15 mượt hơn Galaxy", vec![]).unwrap(),
    ])
    .unwrap();
    let (config, backends) = mock_pipeline();
    let run = run_pipeline(&data, &config, &backends, 2).unwrap();
    let ids: Vec<&str> = run.predictions.iter().map(|s| s.id()).collect();
    assert_eq!(ids, ["c", "a", "b"]);
    let counts: Vec<usize> = run.predictions.iter().map(|s| s.quintuples().len()).collect();
    assert_eq!(counts, [1, 0, 1]);
    assert_eq!(run.report.quintuples, 2);
    let bytes = |d: &Dataset| {
        let mut out = Vec::new();
        write_canonical(d, &mut out).unwrap();
        out
    };
    let again = run_pipeline(&data, &config, &backends, 1).unwrap();
    assert_eq!(bytes(&run.predictions), bytes(&again.predictions));

    let empty = run_pipeline(&Dataset::default(), &config, &backends, 4).unwrap();
    assert!(empty.predictions.is_empty());
    assert_eq!((empty.report.sentences, empty.report.quintuples, empty.report.demotions), (0, 0, 0));
}

/// Writes `v2.jsonl` and a small class-balanced `v3.jsonl` built from it.
fn experiment_data(dir: &Path) {
    let v2 = synthetic_corpus(&SyntheticConfig { sentences: 240, seed: 31, ..Default::default() });
    export_dataset(&v2, dir.join("v2.jsonl")).unwrap();
    let dicts = build_dictionaries(&v2).unwrap().dictionaries;
    let present = label_counts(&v2);
    let target = present.values().max().unwrap() + 10;
    let spec = AugmentSpec { basis: TargetBasis::Combined, ..AugmentSpec::new(ComparisonLabel::ALL.map(|l| (l, target)), 31) };
    export_dataset(&generate_dataset(&v2, &dicts, &spec).unwrap(), dir.join("v3.jsonl")).unwrap();
}

fn desk(preset: ExperimentPreset) -> comom::pipeline::ExperimentConfig {
    let mut config = preset.config(31);
    config.train.learning_rate = 1e-2;
    config.train.epochs = 5;
    config
}

#[test]
fn every_preset_runs_at_desk_scale() {
    let dir = tempfile::tempdir().unwrap();
    experiment_data(dir.path());
    for preset in ExperimentPreset::ALL {
        let out = dir.path().join(preset.as_str());
        let outcome = run_experiment(&desk(preset), dir.path(), &out).unwrap();
        assert!(outcome.report.macro_f1 > 0.3, "{preset}: {}", outcome.report.macro_f1);
        let (_, bootstrap, mode) = preset.definition();
        assert_eq!(outcome.pipeline.stage1.is_some(), mode == Stage1Mode::Binary, "{preset}");
        let stage3 = if bootstrap { "stage3.json" } else { "stage3.bin" };
        assert!(out.join(stage3).is_file(), "{preset}");
        assert_eq!(out.join("stage1.bin").exists() || out.join("stage1.json").exists(), mode == Stage1Mode::Binary);
        for file in ["experiment.json", "pipeline.json", "predictions.jsonl", "report.json", "run.json"] {
            assert!(out.join(file).is_file(), "{preset}: {file}");
        }
        let predictions = read_dataset(out.join("predictions.jsonl")).unwrap();
        assert_eq!(predictions.len(), outcome.test_sentences);
    }
}

#[test]
fn preset_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    experiment_data(dir.path());
    let a = run_experiment(&desk(ExperimentPreset::E5), dir.path(), &dir.path().join("a")).unwrap();
    let b = run_experiment(&desk(ExperimentPreset::E5), dir.path(), &dir.path().join("b")).unwrap();
    assert_eq!(a.report, b.report);
    for file in ["predictions.jsonl", "report.json", "stage3.m0.bin", "stage2-full.bin"] {
        let read = |d: &str| std::fs::read(dir.path().join(d).join(file)).unwrap();
        assert_eq!(read("a"), read("b"), "{file}");
    }
}
