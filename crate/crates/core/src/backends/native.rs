use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{FeatureConfig, FeatureVector, Featurizer};
use super::linear::{SoftmaxRegression, TrainReport};
use super::{Backend, Capability, TrainConfig};
use crate::error::{Error, Result};
use crate::pipeline::{candidate_quadruples, DEFAULT_MAX_QUADRUPLES};
use crate::types::{tags_for_quintuples, Dataset, LogitVector, Quadruple, Sentence, TagLogits};

const MAGIC: &[u8; 8] = b"COMOM-LM";
const FORMAT_VERSION: u32 = 1;

/// A trained linear model serving exactly one capability.
#[derive(Debug, Clone, PartialEq)]
pub struct NativeModel {
    name: String,
    task: Capability,
    featurizer: Featurizer,
    model: SoftmaxRegression,
    pub report: TrainReport,
}

#[derive(Serialize, Deserialize)]
struct Header {
    task: Capability,
    alphabet: Vec<String>,
    classes: usize,
    features: FeatureConfig,
    report: TrainReport,
}

/// Labeled feature vectors for `task`. The tagging and quadruple tasks only
/// use comparative sentences.
pub fn training_samples(task: Capability, dataset: &Dataset, featurizer: &Featurizer) -> Result<Vec<(FeatureVector, usize)>> {
    let mut samples = Vec::new();
    match task {
        Capability::Sentence2Way => {
            for s in dataset {
                samples.push((featurizer.sentence(s), usize::from(s.is_comparative())));
            }
        }
        Capability::Token9Tag => {
            for s in dataset.comparative() {
                let tags = tags_for_quintuples(s)?;
                samples.extend(featurizer.tokens(s).into_iter().zip(tags.into_iter().map(|t| t.id())));
            }
        }
        Capability::Quintuple9Label => {
            for s in dataset.comparative() {
                for (quad, label) in candidate_quadruples(s, DEFAULT_MAX_QUADRUPLES) {
                    samples.push((featurizer.quadruple(s, &quad), label.index()));
                }
            }
        }
    }
    Ok(samples)
}

pub fn train_native(task: Capability, dataset: &Dataset, config: &TrainConfig) -> Result<NativeModel> {
    train_native_with(task, dataset, config, FeatureConfig::default())
}

/// Trains a softmax regression for `task` over hashed features.
pub fn train_native_with(
    task: Capability,
    dataset: &Dataset,
    config: &TrainConfig,
    features: FeatureConfig,
) -> Result<NativeModel> {
    config.validate()?;
    if !(1..=30).contains(&features.hash_bits) {
        return Err(Error::InvalidConfig(format!("hash_bits {} outside 1..=30", features.hash_bits)));
    }
    let featurizer = Featurizer::new(features);
    let samples = training_samples(task, dataset, &featurizer)?;
    if samples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut model = SoftmaxRegression::new(task.width(), featurizer.dim());
    let report = model.fit(&samples, config)?;
    Ok(NativeModel { name: format!("native-{task}"), task, featurizer, model, report })
}

impl NativeModel {
    pub fn task(&self) -> Capability {
        self.task
    }

    pub fn features(&self) -> FeatureConfig {
        self.featurizer.config
    }

    pub fn linear(&self) -> &SoftmaxRegression {
        &self.model
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            task: self.task,
            alphabet: self.task.alphabet(),
            classes: self.model.classes(),
            features: self.featurizer.config,
            report: self.report.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let classes = self.model.classes();
        let rows: Vec<usize> = (0..self.model.dim()).filter(|&f| self.model.row(f).iter().any(|w| *w != 0.0)).collect();

        let mut out = Vec::with_capacity(24 + header.len() + rows.len() * (4 + 8 * classes));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for b in self.model.bias() {
            out.extend_from_slice(&b.to_le_bytes());
        }
        out.extend_from_slice(&(rows.len() as u32).to_le_bytes());
        for f in rows {
            out.extend_from_slice(&(f as u32).to_le_bytes());
            for w in self.model.row(f) {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::InvalidModel("not a native model file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::InvalidModel(format!("unsupported model format version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)?;
        if header.classes != header.task.width() || header.alphabet != header.task.alphabet() {
            return Err(Error::InvalidModel("alphabet does not match task".into()));
        }
        if !(1..=30).contains(&header.features.hash_bits) {
            return Err(Error::InvalidModel("hash_bits out of range".into()));
        }
        let featurizer = Featurizer::new(header.features);
        let classes = header.classes;
        let dim = featurizer.dim();
        let bias = (0..classes).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let rows = r.u32()? as usize;
        let mut weights = vec![0.0; classes * dim];
        for _ in 0..rows {
            let f = r.u32()? as usize;
            if f >= dim {
                return Err(Error::InvalidModel(format!("feature {f} outside dimension {dim}")));
            }
            for c in 0..classes {
                weights[f * classes + c] = r.f64()?;
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::InvalidModel("trailing bytes".into()));
        }
        let model = SoftmaxRegression::from_parts(classes, dim, weights, bias)?;
        Ok(NativeModel {
            name: format!("native-{}", header.task),
            task: header.task,
            featurizer,
            model,
            report: header.report,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("native").to_string();
        Ok(Self::from_bytes(&fs::read(path)?)?.with_name(name))
    }

    /// Loads a model file and checks it was trained for `task`.
    pub fn load_for(path: impl AsRef<Path>, task: Capability) -> Result<Self> {
        let model = Self::load(path)?;
        if model.task != task {
            return Err(Error::TaskMismatch { expected: task, found: model.task });
        }
        Ok(model)
    }

    fn logits(&self, x: &FeatureVector) -> LogitVector {
        LogitVector::new(self.model.logits(x))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::InvalidModel("truncated model file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Backend for NativeModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        BTreeSet::from([self.task])
    }

    fn sentence_logits(&self, batch: &[Sentence]) -> Result<Vec<LogitVector>> {
        if self.task != Capability::Sentence2Way {
            return Err(Error::CapabilityMissing { backend: self.name.clone(), capability: Capability::Sentence2Way });
        }
        Ok(batch.iter().map(|s| self.logits(&self.featurizer.sentence(s))).collect())
    }

    fn token_logits(&self, batch: &[Sentence]) -> Result<Vec<TagLogits>> {
        if self.task != Capability::Token9Tag {
            return Err(Error::CapabilityMissing { backend: self.name.clone(), capability: Capability::Token9Tag });
        }
        Ok(batch
            .iter()
            .map(|s| TagLogits(self.featurizer.tokens(s).iter().map(|x| self.logits(x)).collect()))
            .collect())
    }

    fn quadruple_logits(&self, sentence: &Sentence, quads: &[Quadruple]) -> Result<Vec<LogitVector>> {
        if self.task != Capability::Quintuple9Label {
            return Err(Error::CapabilityMissing { backend: self.name.clone(), capability: Capability::Quintuple9Label });
        }
        Ok(quads.iter().map(|q| self.logits(&self.featurizer.quadruple(sentence, q))).collect())
    }
}
