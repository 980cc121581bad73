//! The three-stage extraction pipeline and the experiment presets.
//!
//! Stage 1 decides whether a sentence is comparative, stage 2 tags element
//! spans, and stage 3 classifies every combination of extracted elements
//! into one of the eight labels or `NONE`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::{
    classify_quadruples, classify_sentence, connect_external, tag_tokens, train_native_with, Backend,
    BackendDescriptor, Capability, ConnectOptions, FeatureConfig, FeatureProfile, NativeModel, TrainConfig,
};
use crate::ensemble::{bootstrap_train, make_folds, EnsembleBackend, EnsembleKind, EnsembleWeights};
use crate::error::{Error, Result};
use crate::eval::{e_t5_macro, stage_metrics, Averaging, EvalReport};
use crate::ingest::{export_dataset, read_dataset};
use crate::types::{
    Dataset, ElementKind, Quadruple, Quintuple, Sentence, StageLabel, Tag, TagLogits, TokenSpan,
};

pub const DEFAULT_MAX_QUADRUPLES: usize = 256;

/// Extracted spans per element kind, each sorted and free of duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSets {
    pub subject: Vec<TokenSpan>,
    pub object: Vec<TokenSpan>,
    pub aspect: Vec<TokenSpan>,
    pub predicate: Vec<TokenSpan>,
}

impl ElementSets {
    pub fn get(&self, kind: ElementKind) -> &[TokenSpan] {
        match kind {
            ElementKind::Subject => &self.subject,
            ElementKind::Object => &self.object,
            ElementKind::Aspect => &self.aspect,
            ElementKind::Predicate => &self.predicate,
        }
    }

    fn get_mut(&mut self, kind: ElementKind) -> &mut Vec<TokenSpan> {
        match kind {
            ElementKind::Subject => &mut self.subject,
            ElementKind::Object => &mut self.object,
            ElementKind::Aspect => &mut self.aspect,
            ElementKind::Predicate => &mut self.predicate,
        }
    }

    pub fn insert(&mut self, kind: ElementKind, span: TokenSpan) {
        let set = self.get_mut(kind);
        if let Err(at) = set.binary_search(&span) {
            set.insert(at, span);
        }
    }

    /// The union of the element spans of `quintuples`.
    pub fn from_quintuples(quintuples: &[Quintuple]) -> Self {
        let mut sets = ElementSets::default();
        for q in quintuples {
            for (kind, span) in q.elements() {
                sets.insert(kind, span);
            }
        }
        sets
    }

    pub fn is_empty(&self) -> bool {
        ElementKind::ALL.iter().all(|&k| self.get(k).is_empty())
    }

    /// `Π max(1, |set|)`, saturating.
    pub fn combinations(&self) -> usize {
        ElementKind::ALL.iter().fold(1usize, |acc, &k| acc.saturating_mul(self.get(k).len().max(1)))
    }
}

/// Lenient BIO decoding: `B` opens a span, `I` extends an open span of the
/// same kind and otherwise opens a new one, `O` closes.
pub fn decode_tags(tags: &[Tag]) -> ElementSets {
    let mut sets = ElementSets::default();
    let mut open: Option<(ElementKind, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let next = match (*tag, open) {
            (Tag::I(k), Some((open_kind, start))) if k == open_kind => Some((k, start)),
            (Tag::B(k) | Tag::I(k), _) => Some((k, i)),
            (Tag::O, _) => None,
        };
        if let Some((kind, start)) = open {
            if next != Some((kind, start)) {
                sets.insert(kind, TokenSpan::new(start, i - 1));
            }
        }
        open = next;
    }
    if let Some((kind, start)) = open {
        sets.insert(kind, TokenSpan::new(start, tags.len() - 1));
    }
    sets
}

/// Per-token argmax (ties toward the lower tag id) then [`decode_tags`].
pub fn decode_spans(logits: &TagLogits) -> ElementSets {
    decode_tags(&logits.argmax_tags())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GeneratedQuadruples {
    pub quads: Vec<Quadruple>,
    /// Size of the full product before the cap.
    pub total: usize,
    pub truncated: bool,
}

/// Cartesian product of the four sets in subject-major order. An empty set
/// contributes a single absent slot.
pub fn generate_quadruples(sets: &ElementSets, cap: usize) -> Result<GeneratedQuadruples> {
    if sets.is_empty() {
        return Err(Error::AllSetsEmpty);
    }
    let options = |kind| -> Vec<Option<TokenSpan>> {
        let set = sets.get(kind);
        if set.is_empty() {
            vec![None]
        } else {
            set.iter().copied().map(Some).collect()
        }
    };
    let [subjects, objects, aspects, predicates] = ElementKind::ALL.map(options);
    let total = sets.combinations();
    let mut quads = Vec::with_capacity(total.min(cap));
    'outer: for &subject in &subjects {
        for &object in &objects {
            for &aspect in &aspects {
                for &predicate in &predicates {
                    if quads.len() == cap {
                        break 'outer;
                    }
                    quads.push(Quadruple { subject, object, aspect, predicate });
                }
            }
        }
    }
    Ok(GeneratedQuadruples { quads, total, truncated: total > cap })
}

/// Stage-3 training pairs for a gold sentence: every combination of its gold
/// elements labeled with the matching gold quintuple's label or `NONE`. Gold
/// quadruples cut off by the cap are appended.
pub fn candidate_quadruples(sentence: &Sentence, cap: usize) -> Vec<(Quadruple, StageLabel)> {
    let gold = sentence.quintuples();
    let label_of = |q: &Quadruple| gold.iter().find(|g| g.quadruple() == *q).map(|g| StageLabel::Label(g.label));
    let Ok(generated) = generate_quadruples(&ElementSets::from_quintuples(gold), cap) else {
        return Vec::new();
    };
    let mut out: Vec<(Quadruple, StageLabel)> =
        generated.quads.iter().map(|q| (*q, label_of(q).unwrap_or(StageLabel::None))).collect();
    for g in gold {
        let quad = g.quadruple();
        if !generated.quads.contains(&quad) && !out.iter().any(|(q, _)| *q == quad) {
            out.push((quad, StageLabel::Label(g.label)));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage1Mode {
    /// A dedicated 2-way sentence classifier gates the sentence.
    Binary,
    /// Comparative iff the tagger finds any span.
    #[default]
    TaggerDerived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodePolicy {
    #[default]
    Lenient,
}

/// A model file (`.json` for an ensemble manifest, otherwise a native
/// model) or an external backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(PathBuf),
    External(BackendDescriptor),
}

impl ModelRef {
    pub fn open(&self, task: Capability, base: &Path, options: &ConnectOptions) -> Result<Arc<dyn Backend>> {
        match self {
            ModelRef::Path(path) => {
                let path = base.join(path);
                if path.extension().is_some_and(|e| e == "json") {
                    let ensemble = EnsembleBackend::load(&path, options)?;
                    if !ensemble.capabilities().contains(&task) {
                        return Err(Error::CapabilityMissing { backend: ensemble.name().to_string(), capability: task });
                    }
                    Ok(Arc::new(ensemble))
                } else {
                    Ok(Arc::new(NativeModel::load_for(&path, task)?))
                }
            }
            ModelRef::External(descriptor) => {
                if !descriptor.capabilities.contains(&task) {
                    return Err(Error::CapabilityMissing { backend: descriptor.name.clone(), capability: task });
                }
                Ok(Arc::new(connect_external(descriptor, options)?))
            }
        }
    }
}

fn default_max_quadruples() -> usize {
    DEFAULT_MAX_QUADRUPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub stage1_mode: Stage1Mode,
    /// Required in binary mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1: Option<ModelRef>,
    pub stage2: Vec<ModelRef>,
    /// Defaults to 0.2, 0.3, 0.5 for three members, uniform otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2_weights: Option<EnsembleWeights>,
    pub stage3: ModelRef,
    #[serde(default = "default_max_quadruples")]
    pub max_quadruples: usize,
    #[serde(default)]
    pub decode: DecodePolicy,
}

impl PipelineConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let config: PipelineConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage1_mode == Stage1Mode::Binary && self.stage1.is_none() {
            return Err(Error::InvalidConfig("binary stage-1 mode needs a stage1 model".into()));
        }
        if self.stage2.is_empty() {
            return Err(Error::InvalidConfig("stage2 needs at least one tagger".into()));
        }
        if self.max_quadruples == 0 {
            return Err(Error::InvalidConfig("max_quadruples must be at least 1".into()));
        }
        let weights = self.effective_weights()?;
        if weights.len() != self.stage2.len() {
            return Err(Error::WeightCountMismatch { weights: weights.len(), members: self.stage2.len() });
        }
        Ok(())
    }

    pub fn effective_weights(&self) -> Result<EnsembleWeights> {
        match &self.stage2_weights {
            Some(w) => Ok(w.clone()),
            None if self.stage2.len() == 3 => Ok(EnsembleWeights::stage2_default()),
            None => EnsembleWeights::uniform(self.stage2.len()),
        }
    }
}

/// Opened models for each stage.
#[derive(Clone)]
pub struct PipelineBackends {
    pub stage1: Option<Arc<dyn Backend>>,
    /// Already combines its members; see [`EnsembleBackend`].
    pub stage2: Arc<dyn Backend>,
    pub stage3: Arc<dyn Backend>,
}

impl PipelineBackends {
    /// Opens every model of `config`, resolving paths against `base`.
    pub fn open(config: &PipelineConfig, base: &Path, options: &ConnectOptions) -> Result<Self> {
        config.validate()?;
        let stage1 = match (&config.stage1_mode, &config.stage1) {
            (Stage1Mode::Binary, Some(m)) => Some(m.open(Capability::Sentence2Way, base, options).map_err(|e| e.at_stage(1))?),
            _ => None,
        };
        let taggers = config
            .stage2
            .iter()
            .map(|m| m.open(Capability::Token9Tag, base, options))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at_stage(2))?;
        let stage2 = EnsembleBackend::new("stage2", Capability::Token9Tag, EnsembleKind::Weighted, taggers, config.effective_weights()?)?;
        let stage3 = config.stage3.open(Capability::Quintuple9Label, base, options).map_err(|e| e.at_stage(3))?;
        Ok(PipelineBackends { stage1, stage2: Arc::new(stage2), stage3 })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub stage1: Duration,
    pub stage2: Duration,
    pub stage3: Duration,
}

impl StageTimings {
    fn add(&mut self, other: &StageTimings) {
        self.stage1 += other.stage1;
        self.stage2 += other.stage2;
        self.stage3 += other.stage3;
    }
}

/// What each stage decided for one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceTrace {
    pub id: String,
    /// The stage-1 decision.
    pub comparative: bool,
    pub sets: ElementSets,
    pub candidates: usize,
    pub truncated: bool,
    /// Gated comparative, but no quadruple survived stage 3.
    pub demoted: bool,
    #[serde(skip)]
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub quintuples: Vec<Quintuple>,
    pub trace: SentenceTrace,
}

/// Runs the three stages on one sentence.
pub fn predict_sentence(sentence: &Sentence, config: &PipelineConfig, backends: &PipelineBackends) -> Result<Prediction> {
    let batch = std::slice::from_ref(sentence);
    let mut trace = SentenceTrace {
        id: sentence.id().to_string(),
        comparative: false,
        sets: ElementSets::default(),
        candidates: 0,
        truncated: false,
        demoted: false,
        timings: StageTimings::default(),
    };
    let tag = |trace: &mut SentenceTrace| -> Result<()> {
        let start = Instant::now();
        let logits = tag_tokens(backends.stage2.as_ref(), batch).map_err(|e| e.at_stage(2))?;
        trace.sets = decode_spans(&logits[0]);
        trace.timings.stage2 = start.elapsed();
        Ok(())
    };

    match config.stage1_mode {
        Stage1Mode::Binary => {
            let start = Instant::now();
            let stage1 = backends
                .stage1
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("binary stage-1 mode needs a stage1 model".into()).at_stage(1))?;
            let logits = classify_sentence(stage1.as_ref(), batch).map_err(|e| e.at_stage(1))?;
            trace.comparative = logits[0].0[1] > logits[0].0[0];
            trace.timings.stage1 = start.elapsed();
            if trace.comparative {
                tag(&mut trace)?;
            }
        }
        Stage1Mode::TaggerDerived => {
            tag(&mut trace)?;
            trace.comparative = !trace.sets.is_empty();
        }
    }
    if !trace.comparative {
        return Ok(Prediction { quintuples: Vec::new(), trace });
    }

    let start = Instant::now();
    let mut quintuples: Vec<Quintuple> = Vec::new();
    if let Ok(generated) = generate_quadruples(&trace.sets, config.max_quadruples) {
        trace.candidates = generated.quads.len();
        trace.truncated = generated.truncated;
        let logits =
            classify_quadruples(backends.stage3.as_ref(), sentence, &generated.quads).map_err(|e| e.at_stage(3))?;
        for (quad, l) in generated.quads.iter().zip(logits) {
            if let StageLabel::Label(label) = StageLabel::from_index(l.argmax()).unwrap_or(StageLabel::None) {
                let q = quad.with_label(label);
                if !quintuples.contains(&q) {
                    quintuples.push(q);
                }
            }
        }
    }
    trace.timings.stage3 = start.elapsed();
    trace.demoted = quintuples.is_empty();
    Ok(Prediction { quintuples, trace })
}

/// Aggregate counters of a pipeline run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub sentences: usize,
    pub gated_comparative: usize,
    pub predicted_comparative: usize,
    pub quintuples: usize,
    pub demotions: usize,
    pub truncations: usize,
    pub stage1_seconds: f64,
    pub stage2_seconds: f64,
    pub stage3_seconds: f64,
    pub total_seconds: f64,
}

impl RunReport {
    fn record(&mut self, prediction: &Prediction, timings: &mut StageTimings) {
        self.sentences += 1;
        self.gated_comparative += usize::from(prediction.trace.comparative);
        self.predicted_comparative += usize::from(!prediction.quintuples.is_empty());
        self.quintuples += prediction.quintuples.len();
        self.demotions += usize::from(prediction.trace.demoted);
        self.truncations += usize::from(prediction.trace.truncated);
        timings.add(&prediction.trace.timings);
    }

    fn finish(&mut self, timings: &StageTimings, total: Duration) {
        self.stage1_seconds = timings.stage1.as_secs_f64();
        self.stage2_seconds = timings.stage2.as_secs_f64();
        self.stage3_seconds = timings.stage3.as_secs_f64();
        self.total_seconds = total.as_secs_f64();
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub predictions: Dataset,
    pub traces: Vec<SentenceTrace>,
    pub report: RunReport,
}

/// A run stopped at its first failing sentence. `partial` holds the
/// predictions for every sentence before it.
#[derive(Debug, thiserror::Error)]
#[error("pipeline stopped at sentence {sentence:?}: {error}")]
pub struct PipelineFailure {
    pub sentence: String,
    #[source]
    pub error: Error,
    pub partial: PipelineRun,
}

/// Predicts every sentence in order. With `workers > 1` contiguous chunks run
/// concurrently; output order and content do not depend on `workers`.
pub fn run_pipeline(
    dataset: &Dataset,
    config: &PipelineConfig,
    backends: &PipelineBackends,
    workers: usize,
) -> std::result::Result<PipelineRun, Box<PipelineFailure>> {
    let started = Instant::now();
    let sentences = dataset.sentences();
    let workers = workers.clamp(1, sentences.len().max(1));
    let chunk = sentences.len().div_ceil(workers).max(1);
    let run_chunk = |part: &[Sentence]| -> Vec<Result<Prediction>> {
        let mut out = Vec::with_capacity(part.len());
        for s in part {
            let r = predict_sentence(s, config, backends);
            let failed = r.is_err();
            out.push(r);
            if failed {
                break;
            }
        }
        out
    };
    let results: Vec<Result<Prediction>> = if workers == 1 {
        run_chunk(sentences)
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = sentences.chunks(chunk).map(|part| scope.spawn(move || run_chunk(part))).collect();
            handles.into_iter().flat_map(|h| h.join().expect("pipeline worker panicked")).collect()
        })
    };

    let mut predicted = Vec::new();
    let mut traces = Vec::new();
    let mut report = RunReport::default();
    let mut timings = StageTimings::default();
    for (sentence, result) in sentences.iter().zip(results) {
        match result {
            Ok(p) => {
                report.record(&p, &mut timings);
                predicted.push(sentence.with_quintuples(p.quintuples).expect("predicted spans are valid"));
                traces.push(p.trace);
            }
            Err(error) => {
                report.finish(&timings, started.elapsed());
                let predictions = Dataset::new(predicted).expect("ids come from a dataset");
                return Err(Box::new(PipelineFailure {
                    sentence: sentence.id().to_string(),
                    error,
                    partial: PipelineRun { predictions, traces, report },
                }));
            }
        }
    }
    report.finish(&timings, started.elapsed());
    let predictions = Dataset::new(predicted).expect("ids come from a dataset");
    Ok(PipelineRun { predictions, traces, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExperimentPreset {
    E1,
    E2,
    E3,
    E4,
    E5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetVersion {
    V2,
    V3,
}

impl DatasetVersion {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetVersion::V2 => "v2",
            DatasetVersion::V3 => "v3",
        }
    }
}

impl ExperimentPreset {
    pub const ALL: [ExperimentPreset; 5] =
        [ExperimentPreset::E1, ExperimentPreset::E2, ExperimentPreset::E3, ExperimentPreset::E4, ExperimentPreset::E5];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentPreset::E1 => "E1",
            ExperimentPreset::E2 => "E2",
            ExperimentPreset::E3 => "E3",
            ExperimentPreset::E4 => "E4",
            ExperimentPreset::E5 => "E5",
        }
    }

    /// Dataset version, bootstrap flag and stage-1 mode.
    pub fn definition(self) -> (DatasetVersion, bool, Stage1Mode) {
        use DatasetVersion::*;
        use Stage1Mode::*;
        match self {
            ExperimentPreset::E1 => (V2, true, TaggerDerived),
            ExperimentPreset::E2 => (V2, false, Binary),
            ExperimentPreset::E3 => (V2, true, Binary),
            ExperimentPreset::E4 => (V3, false, TaggerDerived),
            ExperimentPreset::E5 => (V3, true, TaggerDerived),
        }
    }

    pub fn config(self, seed: u64) -> ExperimentConfig {
        let (dataset_version, bootstrap, stage1_mode) = self.definition();
        ExperimentConfig {
            preset: self,
            dataset_version,
            bootstrap,
            stage1_mode,
            folds: 3,
            stage2_profiles: vec![FeatureProfile::Words, FeatureProfile::Chars, FeatureProfile::Full],
            stage2_weights: EnsembleWeights::stage2_default(),
            max_quadruples: DEFAULT_MAX_QUADRUPLES,
            hash_bits: FeatureConfig::default().hash_bits,
            train: TrainConfig { seed, ..TrainConfig::default() },
            holdout_fraction: 0.2,
            averaging: Averaging::default(),
            seed,
        }
    }
}

impl fmt::Display for ExperimentPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset {s:?}; expected E1..E5")))
    }
}

/// Everything an experiment run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: ExperimentPreset,
    pub dataset_version: DatasetVersion,
    pub bootstrap: bool,
    pub stage1_mode: Stage1Mode,
    pub folds: usize,
    /// One native tagger per profile.
    pub stage2_profiles: Vec<FeatureProfile>,
    pub stage2_weights: EnsembleWeights,
    pub max_quadruples: usize,
    pub hash_bits: u8,
    pub train: TrainConfig,
    /// Share of the data held out when no `test.jsonl` is present.
    pub holdout_fraction: f64,
    pub averaging: Averaging,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.stage2_profiles.len() != self.stage2_weights.len() {
            return Err(Error::WeightCountMismatch { weights: self.stage2_weights.len(), members: self.stage2_profiles.len() });
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::InvalidConfig("holdout_fraction must lie strictly between 0 and 1".into()));
        }
        if self.bootstrap && self.folds < 2 {
            return Err(Error::InvalidConfig("bootstrapping needs at least 2 folds".into()));
        }
        if !(1..=30).contains(&self.hash_bits) || self.max_quadruples == 0 {
            return Err(Error::InvalidConfig("hash_bits must be in 1..=30 and max_quadruples at least 1".into()));
        }
        Ok(())
    }

    fn features(&self, profile: FeatureProfile) -> FeatureConfig {
        FeatureConfig { hash_bits: self.hash_bits, profile }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub run: RunReport,
    pub pipeline: PipelineConfig,
    pub train_sentences: usize,
    pub test_sentences: usize,
}

/// Deterministic train/test split: a seeded shuffle, the first
/// `round(n·fraction)` indices (at least one, never all) become the test set.
pub fn holdout_split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if dataset.len() < 2 {
        return Err(Error::TooFewSamples { samples: dataset.len(), k: 2 });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((dataset.len() as f64 * fraction).round() as usize).clamp(1, dataset.len() - 1);
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((dataset.select(&train), dataset.select(&test)))
}

fn train_stage(
    config: &ExperimentConfig,
    task: Capability,
    data: &Dataset,
    features: FeatureConfig,
    out_dir: &Path,
    stem: &str,
) -> Result<ModelRef> {
    if config.bootstrap {
        let plan = make_folds(data, config.folds, config.seed)?;
        let file = format!("{stem}.json");
        bootstrap_train(task, data, &plan, &config.train, features)?.save(&out_dir.join(&file))?;
        Ok(ModelRef::Path(file.into()))
    } else {
        let file = format!("{stem}.bin");
        train_native_with(task, data, &config.train, features)?.save(out_dir.join(&file))?;
        Ok(ModelRef::Path(file.into()))
    }
}

/// Trains the stage models a preset calls for on `<data_dir>/<version>.jsonl`,
/// predicts the held-out sentences (`<data_dir>/test.jsonl` when present)
/// and scores them. Artifacts land in `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, data_dir: &Path, out_dir: &Path) -> Result<ExperimentOutcome> {
    config.validate()?;
    let version = config.dataset_version.as_str();
    let data_path = data_dir.join(format!("{version}.jsonl"));
    if !data_path.is_file() {
        return Err(Error::MissingDatasetVersion(format!("{version} (expected {})", data_path.display())));
    }
    let data = read_dataset(&data_path)?;
    let test_path = data_dir.join("test.jsonl");
    let (train, test) =
        if test_path.is_file() { (data, read_dataset(&test_path)?) } else { holdout_split(&data, config.holdout_fraction, config.seed)? };
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("experiment.json"), serde_json::to_string_pretty(config)? + "\n")?;

    let full = config.features(FeatureProfile::Full);
    let train_set = &train;
    let (stage1, stage2, stage3) = std::thread::scope(|scope| {
        let stage1 = scope.spawn(move || match config.stage1_mode {
            Stage1Mode::Binary => {
                train_stage(config, Capability::Sentence2Way, train_set, full, out_dir, "stage1").map(Some).map_err(|e| e.at_stage(1))
            }
            Stage1Mode::TaggerDerived => Ok(None),
        });
        let taggers: Vec<_> = config
            .stage2_profiles
            .iter()
            .map(|&profile| {
                scope.spawn(move || -> Result<ModelRef> {
                    let file = format!("stage2-{}.bin", serde_json::to_value(profile)?.as_str().unwrap_or("member"));
                    train_native_with(Capability::Token9Tag, train_set, &config.train, config.features(profile))?
                        .save(out_dir.join(&file))?;
                    Ok(ModelRef::Path(file.into()))
                })
            })
            .collect();
        let stage3 = scope.spawn(move || {
            train_stage(config, Capability::Quintuple9Label, train_set, full, out_dir, "stage3").map_err(|e| e.at_stage(3))
        });
        let stage2: Result<Vec<ModelRef>> =
            taggers.into_iter().map(|h| h.join().expect("tagger training panicked").map_err(|e| e.at_stage(2))).collect();
        (stage1.join().expect("stage-1 training panicked"), stage2, stage3.join().expect("stage-3 training panicked"))
    });

    let pipeline = PipelineConfig {
        stage1_mode: config.stage1_mode,
        stage1: stage1?,
        stage2: stage2?,
        stage2_weights: Some(config.stage2_weights.clone()),
        stage3: stage3?,
        max_quadruples: config.max_quadruples,
        decode: DecodePolicy::Lenient,
    };
    fs::write(out_dir.join("pipeline.json"), serde_json::to_string_pretty(&pipeline)? + "\n")?;

    let backends = PipelineBackends::open(&pipeline, out_dir, &ConnectOptions::default())?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let run = run_pipeline(&test, &pipeline, &backends, workers).map_err(|f| f.error)?;
    export_dataset(&run.predictions, out_dir.join("predictions.jsonl"))?;

    let mut report = e_t5_macro(&test, &run.predictions, config.averaging)?;
    let stages = stage_metrics(&test, &run.traces)?;
    report.stage1 = Some(stages.stage1);
    report.stage2 = Some(stages.stage2);
    fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    fs::write(out_dir.join("run.json"), serde_json::to_string_pretty(&run.report)? + "\n")?;
    Ok(ExperimentOutcome {
        report,
        run: run.report,
        pipeline,
        train_sentences: train.len(),
        test_sentences: test.len(),
    })
}
