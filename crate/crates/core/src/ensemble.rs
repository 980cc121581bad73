//! Weighted logit combination across members and k-fold bootstrap training.
//!
//! ```
//! use comom::ensemble::{combine_weighted, EnsembleWeights};
//! use comom::LogitVector;
//!
//! let members = [LogitVector(vec![1.0, 0.0]), LogitVector(vec![0.0, 1.0]), LogitVector(vec![0.0, 1.0])];
//! let combined = combine_weighted(&members, &EnsembleWeights::stage2_default()).unwrap();
//! assert!((combined.0[0] - 0.2).abs() < 1e-12 && (combined.0[1] - 0.8).abs() < 1e-12);
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::{
    connect_external, train_native_with, training_samples, Backend, BackendDescriptor, Capability, ConnectOptions,
    FeatureConfig, Featurizer, NativeModel, TrainConfig,
};
use crate::error::{Error, Result};
use crate::types::{argmax, Dataset, LogitTensor, LogitVector, Quadruple, Sentence, TagLogits};

/// One non-negative weight per member, at least one positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EnsembleWeights(Vec<f64>);

impl EnsembleWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(format!("weights must be finite and non-negative: {weights:?}")));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(Error::InvalidConfig("at least one weight must be positive".into()));
        }
        Ok(EnsembleWeights(weights))
    }

    /// `1/k` for each of `k` members.
    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    /// The tagging ensemble's default: 0.2, 0.3 and 0.5.
    pub fn stage2_default() -> Self {
        EnsembleWeights(vec![0.2, 0.3, 0.5])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|w| w * c).collect())
    }
}

impl TryFrom<Vec<f64>> for EnsembleWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EnsembleWeights> for Vec<f64> {
    fn from(w: EnsembleWeights) -> Self {
        w.0
    }
}

/// Elementwise `Σ wᵢ·Yᵢ` over raw logits, with no normalization.
pub fn combine_weighted<T: LogitTensor>(logit_sets: &[T], weights: &EnsembleWeights) -> Result<T> {
    if logit_sets.len() != weights.len() {
        return Err(Error::WeightCountMismatch { weights: weights.len(), members: logit_sets.len() });
    }
    let shape = logit_sets[0].shape();
    let mut out = vec![0.0; logit_sets[0].flat().len()];
    for (set, w) in logit_sets.iter().zip(weights.as_slice()) {
        if set.shape() != shape {
            return Err(Error::ShapeMismatch(format!("member shapes {:?} and {shape:?} differ", set.shape())));
        }
        for (o, y) in out.iter_mut().zip(set.flat()) {
            *o += w * y;
        }
    }
    T::from_flat(&shape, out)
}

/// The mean of member logits.
pub fn bootstrap_predict<T: LogitTensor>(member_outputs: &[T]) -> Result<T> {
    if member_outputs.is_empty() {
        return Err(Error::WeightCountMismatch { weights: 0, members: 0 });
    }
    combine_weighted(member_outputs, &EnsembleWeights::uniform(member_outputs.len())?)
}

/// Assignment of every sample to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Sentence ids in dataset order.
    pub ids: Vec<String>,
    /// Fold of each sample, parallel to `ids`.
    pub folds: Vec<usize>,
}

/// Seeded shuffle, then round-robin fold assignment.
pub fn make_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    let ids: Vec<String> = dataset.iter().map(|s| s.id().to_string()).collect();
    plan_for_ids(ids, k, seed)
}

pub fn plan_for_ids(ids: Vec<String>, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    if ids.len() < k {
        return Err(Error::TooFewSamples { samples: ids.len(), k });
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; ids.len()];
    for (position, &sample) in order.iter().enumerate() {
        folds[sample] = position % k;
    }
    Ok(FoldPlan { k, seed, ids, folds })
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Sample indices in `fold`, ascending.
    pub fn fold(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    /// Sample indices outside `fold`, ascending.
    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.folds[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.k).map(|f| self.folds.iter().filter(|&&x| x == f).count()).collect()
    }

    /// Checks that the plan was made for exactly the sentences of `dataset`.
    pub fn check_covers(&self, dataset: &Dataset) -> Result<()> {
        let matches = dataset.len() == self.len() && dataset.iter().zip(&self.ids).all(|(s, id)| s.id() == id);
        if !matches || self.folds.iter().any(|&f| f >= self.k) {
            return Err(Error::InvalidConfig("fold plan does not cover the dataset".into()));
        }
        Ok(())
    }
}

/// Trains one member per fold: member `i` sees every fold except `i`.
/// `train` receives the member index and its training split.
pub fn bootstrap_train_with<M, F>(dataset: &Dataset, plan: &FoldPlan, train: F) -> Result<Vec<M>>
where
    M: Send,
    F: Fn(usize, &Dataset) -> Result<M> + Sync,
{
    plan.check_covers(dataset)?;
    let splits: Vec<Dataset> = (0..plan.k).map(|i| dataset.select(&plan.training(i))).collect();
    let train = &train;
    let results: Vec<Result<M>> = std::thread::scope(|scope| {
        let handles: Vec<_> = splits.iter().enumerate().map(|(i, split)| scope.spawn(move || train(i, split))).collect();
        handles.into_iter().map(|h| h.join().expect("member training panicked")).collect()
    });
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Member { index, source: Box::new(e) }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberValidation {
    pub member: usize,
    pub train_sentences: usize,
    pub validation_sentences: usize,
    pub validation_samples: usize,
    /// Argmax accuracy on the held-out fold; absent when it has no samples.
    pub accuracy: Option<f64>,
}

/// `k` native members of one task plus their held-out accuracies.
#[derive(Debug, Clone)]
pub struct BootstrapEnsemble {
    pub task: Capability,
    pub members: Vec<NativeModel>,
    pub validation: Vec<MemberValidation>,
}

pub fn bootstrap_train(
    task: Capability,
    dataset: &Dataset,
    plan: &FoldPlan,
    config: &TrainConfig,
    features: FeatureConfig,
) -> Result<BootstrapEnsemble> {
    let members =
        bootstrap_train_with(dataset, plan, |i, split| Ok(train_native_with(task, split, config, features)?.with_name(format!("member-{i}"))))?;
    let featurizer = Featurizer::new(features);
    let mut validation = Vec::new();
    for (i, model) in members.iter().enumerate() {
        let held_out = dataset.select(&plan.fold(i));
        let samples = training_samples(task, &held_out, &featurizer)?;
        let correct = samples.iter().filter(|(x, y)| argmax(&model.linear().logits(x)) == *y).count();
        validation.push(MemberValidation {
            member: i,
            train_sentences: dataset.len() - held_out.len(),
            validation_sentences: held_out.len(),
            validation_samples: samples.len(),
            accuracy: (!samples.is_empty()).then(|| correct as f64 / samples.len() as f64),
        });
    }
    Ok(BootstrapEnsemble { task, members, validation })
}

impl BootstrapEnsemble {
    /// Uniform-weight backend over the members.
    pub fn into_backend(self, name: impl Into<String>) -> Result<EnsembleBackend> {
        let k = self.members.len();
        let members: Vec<Arc<dyn Backend>> = self.members.into_iter().map(|m| Arc::new(m) as Arc<dyn Backend>).collect();
        EnsembleBackend::new(name, self.task, EnsembleKind::Bootstrap, members, EnsembleWeights::uniform(k)?)
    }

    /// Writes `<stem>.m<i>.bin` member files next to `manifest` and the
    /// manifest itself.
    pub fn save(&self, manifest: &Path) -> Result<EnsembleManifest> {
        let dir = manifest.parent().unwrap_or(Path::new("."));
        let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("ensemble");
        let mut members = Vec::new();
        for (i, m) in self.members.iter().enumerate() {
            let file = format!("{stem}.m{i}.bin");
            m.save(dir.join(&file))?;
            members.push(MemberRef::Path { path: PathBuf::from(file) });
        }
        let manifest_doc = EnsembleManifest {
            task: self.task,
            alphabet: self.task.alphabet(),
            kind: EnsembleKind::Bootstrap,
            members,
            weights: EnsembleWeights::uniform(self.members.len())?,
            validation: self.validation.clone(),
        };
        manifest_doc.save(manifest)?;
        Ok(manifest_doc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    /// Heterogeneous members with configured weights.
    Weighted,
    /// Fold members averaged with equal weights.
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MemberRef {
    /// A native model file, relative to the manifest.
    Path { path: PathBuf },
    External { external: BackendDescriptor },
}

/// On-disk description of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub task: Capability,
    pub alphabet: Vec<String>,
    pub kind: EnsembleKind,
    pub members: Vec<MemberRef>,
    pub weights: EnsembleWeights,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub validation: Vec<MemberValidation>,
}

impl EnsembleManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let manifest: EnsembleManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(path, json)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet != self.task.alphabet() {
            return Err(Error::InvalidConfig(format!("alphabet does not match task {}", self.task)));
        }
        if self.weights.len() != self.members.len() {
            return Err(Error::WeightCountMismatch { weights: self.weights.len(), members: self.members.len() });
        }
        Ok(())
    }

    /// Loads every member, resolving relative paths against `base`.
    pub fn open(&self, name: impl Into<String>, base: &Path, options: &ConnectOptions) -> Result<EnsembleBackend> {
        self.validate()?;
        let mut members: Vec<Arc<dyn Backend>> = Vec::new();
        for (index, m) in self.members.iter().enumerate() {
            let member: Result<Arc<dyn Backend>> = match m {
                MemberRef::Path { path } => NativeModel::load_for(base.join(path), self.task).map(|m| Arc::new(m) as _),
                MemberRef::External { external } => connect_external(external, options).map(|m| Arc::new(m) as _),
            };
            members.push(member.map_err(|e| Error::Member { index, source: Box::new(e) })?);
        }
        EnsembleBackend::new(name, self.task, self.kind, members, self.weights.clone())
    }
}

/// Serves one capability by combining its members' logits.
pub struct EnsembleBackend {
    name: String,
    task: Capability,
    kind: EnsembleKind,
    members: Vec<Arc<dyn Backend>>,
    weights: EnsembleWeights,
}

impl EnsembleBackend {
    pub fn new(
        name: impl Into<String>,
        task: Capability,
        kind: EnsembleKind,
        members: Vec<Arc<dyn Backend>>,
        weights: EnsembleWeights,
    ) -> Result<Self> {
        let name = name.into();
        if members.len() != weights.len() {
            return Err(Error::WeightCountMismatch { weights: weights.len(), members: members.len() });
        }
        if let Some(m) = members.iter().find(|m| !m.capabilities().contains(&task)) {
            return Err(Error::CapabilityMissing { backend: m.name().to_string(), capability: task });
        }
        Ok(EnsembleBackend { name, task, kind, members, weights })
    }

    /// Loads a manifest file, resolving member paths against its directory.
    pub fn load(path: &Path, options: &ConnectOptions) -> Result<Self> {
        let manifest = EnsembleManifest::read(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("ensemble").to_string();
        manifest.open(name, path.parent().unwrap_or(Path::new(".")), options)
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn weights(&self) -> &EnsembleWeights {
        &self.weights
    }

    pub fn members(&self) -> &[Arc<dyn Backend>] {
        &self.members
    }

    fn missing(&self, capability: Capability) -> Error {
        Error::CapabilityMissing { backend: self.name.clone(), capability }
    }

    fn each<T>(&self, f: impl Fn(&dyn Backend) -> Result<Vec<T>>) -> Result<Vec<Vec<T>>> {
        self.members
            .iter()
            .enumerate()
            .map(|(index, m)| f(m.as_ref()).map_err(|e| Error::Member { index, source: Box::new(e) }))
            .collect()
    }

    /// Combines per-item outputs `[member][item]` into `[item]`.
    fn combine<T: LogitTensor + Clone>(&self, outputs: Vec<Vec<T>>) -> Result<Vec<T>> {
        let n = outputs[0].len();
        if let Some(o) = outputs.iter().find(|o| o.len() != n) {
            return Err(Error::Alignment { expected: n, actual: o.len() });
        }
        (0..n)
            .map(|i| {
                let items: Vec<T> = outputs.iter().map(|o| o[i].clone()).collect();
                combine_weighted(&items, &self.weights)
            })
            .collect()
    }
}

impl Backend for EnsembleBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        BTreeSet::from([self.task])
    }

    fn sentence_logits(&self, batch: &[Sentence]) -> Result<Vec<LogitVector>> {
        if self.task != Capability::Sentence2Way {
            return Err(self.missing(Capability::Sentence2Way));
        }
        self.combine(self.each(|m| crate::backends::classify_sentence(m, batch))?)
    }

    fn token_logits(&self, batch: &[Sentence]) -> Result<Vec<TagLogits>> {
        if self.task != Capability::Token9Tag {
            return Err(self.missing(Capability::Token9Tag));
        }
        self.combine(self.each(|m| crate::backends::tag_tokens(m, batch))?)
    }

    fn quadruple_logits(&self, sentence: &Sentence, quads: &[Quadruple]) -> Result<Vec<LogitVector>> {
        if self.task != Capability::Quintuple9Label {
            return Err(self.missing(Capability::Quintuple9Label));
        }
        self.combine(self.each(|m| crate::backends::classify_quadruples(m, sentence, quads))?)
    }
}
