//! Classifier interfaces for the three sub-tasks.
//!
//! A [`Backend`] may serve any subset of three capabilities: sentence-level
//! comparative identification (2 logits), per-word BIO tagging (9 logits per
//! word) and quadruple classification (9 logits: the eight labels then
//! `NONE`). The free functions in this module are the checked entry points:
//! they verify capabilities, batch lengths, logit widths and finiteness no
//! matter which backend sits behind the trait object.

mod external;
mod features;
mod linear;
mod mock;
mod native;
pub mod protocol;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LogitVector, Quadruple, Sentence, StageLabel, Tag, TagLogits};

pub use external::{connect_external, ConnectOptions, ExternalBackend};
pub use features::{FeatureConfig, FeatureProfile, FeatureVector, Featurizer};
pub use linear::{SoftmaxRegression, TrainReport};
pub use mock::{MockBackend, MockFixture};
pub use native::{train_native, train_native_with, training_samples, NativeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Capability {
    #[serde(rename = "sentence-2way")]
    Sentence2Way,
    #[serde(rename = "token-9tag")]
    Token9Tag,
    #[serde(rename = "quintuple-9label")]
    Quintuple9Label,
}

impl Capability {
    pub const ALL: [Capability; 3] = [Capability::Sentence2Way, Capability::Token9Tag, Capability::Quintuple9Label];

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::Sentence2Way => "sentence-2way",
            Capability::Token9Tag => "token-9tag",
            Capability::Quintuple9Label => "quintuple-9label",
        }
    }

    /// Width of one logit vector for this task.
    pub fn width(self) -> usize {
        match self {
            Capability::Sentence2Way => 2,
            Capability::Token9Tag => Tag::COUNT,
            Capability::Quintuple9Label => StageLabel::COUNT,
        }
    }

    /// Class names in logit order.
    pub fn alphabet(self) -> Vec<String> {
        match self {
            Capability::Sentence2Way => vec!["non-comparative".into(), "comparative".into()],
            Capability::Token9Tag => Tag::all().map(|t| t.name()).collect(),
            Capability::Quintuple9Label => StageLabel::all().map(|l| l.as_str().to_string()).collect(),
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Capability {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence-2way" | "sentence" => Ok(Capability::Sentence2Way),
            "token-9tag" | "tag" => Ok(Capability::Token9Tag),
            "quintuple-9label" | "quadruple" => Ok(Capability::Quintuple9Label),
            other => Err(Error::InvalidConfig(format!("unknown task {other:?}"))),
        }
    }
}

/// How to reach an external model process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    ChildProcess {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
    Tcp {
        address: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendKind {
    Native { model: PathBuf },
    External { transport: Transport },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub capabilities: BTreeSet<Capability>,
    #[serde(flatten)]
    pub kind: BackendKind,
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.capabilities.is_empty() {
            return Err(Error::InvalidConfig(format!("backend {:?} declares no capability", self.name)));
        }
        Ok(())
    }

    /// Loads a native model or connects to an external process. Relative
    /// model paths resolve against `base`.
    pub fn open(&self, base: &Path, options: &ConnectOptions) -> Result<Box<dyn Backend>> {
        self.validate()?;
        match &self.kind {
            BackendKind::Native { model } => Ok(Box::new(NativeModel::load(base.join(model))?)),
            BackendKind::External { .. } => Ok(Box::new(connect_external(self, options)?)),
        }
    }
}

/// Hyperparameters shared by every trainable backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 3e-5, batch_size: 32, epochs: 15, seed: 0, weight_decay: 0.01 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig("weight decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// A model serving some of the three sub-task capabilities.
///
/// Implementations only need to produce logits; shape and capability checks
/// happen in [`classify_sentence`], [`tag_tokens`] and [`classify_quadruples`].
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn capabilities(&self) -> BTreeSet<Capability>;

    fn sentence_logits(&self, batch: &[Sentence]) -> Result<Vec<LogitVector>> {
        let _ = batch;
        Err(missing(self.name(), Capability::Sentence2Way))
    }

    fn token_logits(&self, batch: &[Sentence]) -> Result<Vec<TagLogits>> {
        let _ = batch;
        Err(missing(self.name(), Capability::Token9Tag))
    }

    fn quadruple_logits(&self, sentence: &Sentence, quads: &[Quadruple]) -> Result<Vec<LogitVector>> {
        let _ = (sentence, quads);
        Err(missing(self.name(), Capability::Quintuple9Label))
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        (**self).capabilities()
    }

    fn sentence_logits(&self, batch: &[Sentence]) -> Result<Vec<LogitVector>> {
        (**self).sentence_logits(batch)
    }

    fn token_logits(&self, batch: &[Sentence]) -> Result<Vec<TagLogits>> {
        (**self).token_logits(batch)
    }

    fn quadruple_logits(&self, sentence: &Sentence, quads: &[Quadruple]) -> Result<Vec<LogitVector>> {
        (**self).quadruple_logits(sentence, quads)
    }
}

fn missing(name: &str, capability: Capability) -> Error {
    Error::CapabilityMissing { backend: name.to_string(), capability }
}

fn require(backend: &dyn Backend, capability: Capability) -> Result<()> {
    if backend.capabilities().contains(&capability) {
        Ok(())
    } else {
        Err(missing(backend.name(), capability))
    }
}

fn check_vector(v: &LogitVector, width: usize) -> Result<()> {
    if v.width() != width {
        return Err(Error::ShapeMismatch(format!("expected {width} logits, got {}", v.width())));
    }
    if !v.is_finite() {
        return Err(Error::Backend("non-finite logits".into()));
    }
    Ok(())
}

fn check_batch_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Alignment { expected, actual });
    }
    Ok(())
}

/// Comparative-status logits, `[non-comparative, comparative]`, per sentence.
pub fn classify_sentence(backend: &dyn Backend, batch: &[Sentence]) -> Result<Vec<LogitVector>> {
    require(backend, Capability::Sentence2Way)?;
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let out = backend.sentence_logits(batch)?;
    check_batch_len(batch.len(), out.len())?;
    out.iter().try_for_each(|v| check_vector(v, 2))?;
    Ok(out)
}

/// Per-word tag logits, exactly one width-9 row per token.
pub fn tag_tokens(backend: &dyn Backend, batch: &[Sentence]) -> Result<Vec<TagLogits>> {
    require(backend, Capability::Token9Tag)?;
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let out = backend.token_logits(batch)?;
    check_batch_len(batch.len(), out.len())?;
    for (sentence, logits) in batch.iter().zip(&out) {
        check_batch_len(sentence.len(), logits.len())?;
        logits.rows().iter().try_for_each(|row| check_vector(row, Tag::COUNT))?;
    }
    Ok(out)
}

/// 9-way logits (eight labels then `NONE`) for each quadruple.
pub fn classify_quadruples(backend: &dyn Backend, sentence: &Sentence, quads: &[Quadruple]) -> Result<Vec<LogitVector>> {
    require(backend, Capability::Quintuple9Label)?;
    for q in quads {
        q.validate(sentence.len())?;
    }
    if quads.is_empty() {
        return Ok(Vec::new());
    }
    let out = backend.quadruple_logits(sentence, quads)?;
    check_batch_len(quads.len(), out.len())?;
    out.iter().try_for_each(|v| check_vector(v, StageLabel::COUNT))?;
    Ok(out)
}

pub fn classify_quadruple(backend: &dyn Backend, sentence: &Sentence, quad: &Quadruple) -> Result<LogitVector> {
    Ok(classify_quadruples(backend, sentence, std::slice::from_ref(quad))?.remove(0))
}

/// Routes each capability to a dedicated backend.
#[derive(Default)]
pub struct CompositeBackend {
    name: String,
    sentence: Option<Arc<dyn Backend>>,
    tag: Option<Arc<dyn Backend>>,
    quadruple: Option<Arc<dyn Backend>>,
}

impl CompositeBackend {
    pub fn new(name: impl Into<String>) -> Self {
        CompositeBackend { name: name.into(), ..Default::default() }
    }

    /// Registers `backend` for every capability it advertises that is not
    /// already routed.
    pub fn with(mut self, backend: Box<dyn Backend>) -> Self {
        let caps = backend.capabilities();
        let shared: Arc<dyn Backend> = Arc::from(backend);
        for cap in caps {
            let slot = match cap {
                Capability::Sentence2Way => &mut self.sentence,
                Capability::Token9Tag => &mut self.tag,
                Capability::Quintuple9Label => &mut self.quadruple,
            };
            if slot.is_none() {
                *slot = Some(shared.clone());
            }
        }
        self
    }
}

impl Backend for Arc<dyn Backend> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        (**self).capabilities()
    }

    fn sentence_logits(&self, batch: &[Sentence]) -> Result<Vec<LogitVector>> {
        (**self).sentence_logits(batch)
    }

    fn token_logits(&self, batch: &[Sentence]) -> Result<Vec<TagLogits>> {
        (**self).token_logits(batch)
    }

    fn quadruple_logits(&self, sentence: &Sentence, quads: &[Quadruple]) -> Result<Vec<LogitVector>> {
        (**self).quadruple_logits(sentence, quads)
    }
}

impl Backend for CompositeBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        let mut caps = BTreeSet::new();
        if self.sentence.is_some() {
            caps.insert(Capability::Sentence2Way);
        }
        if self.tag.is_some() {
            caps.insert(Capability::Token9Tag);
        }
        if self.quadruple.is_some() {
            caps.insert(Capability::Quintuple9Label);
        }
        caps
    }

    fn sentence_logits(&self, batch: &[Sentence]) -> Result<Vec<LogitVector>> {
        self.sentence.as_ref().ok_or_else(|| missing(&self.name, Capability::Sentence2Way))?.sentence_logits(batch)
    }

    fn token_logits(&self, batch: &[Sentence]) -> Result<Vec<TagLogits>> {
        self.tag.as_ref().ok_or_else(|| missing(&self.name, Capability::Token9Tag))?.token_logits(batch)
    }

    fn quadruple_logits(&self, sentence: &Sentence, quads: &[Quadruple]) -> Result<Vec<LogitVector>> {
        self.quadruple
            .as_ref()
            .ok_or_else(|| missing(&self.name, Capability::Quintuple9Label))?
            .quadruple_logits(sentence, quads)
    }
}

pub(crate) fn default_timeout() -> Duration {
    Duration::from_secs(30)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.learning_rate, c.batch_size, c.epochs), (3e-5, 32, 15));
        assert!(c.validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..c }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..c }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..c }.validate().is_err());
    }

    #[test]
    fn descriptor_json() {
        let json = r#"{"name":"pho","capabilities":["token-9tag"],"kind":"external","transport":{"tcp":{"address":"127.0.0.1:9000"}}}"#;
        let d: BackendDescriptor = serde_json::from_str(json).unwrap();
        assert_eq!(d.kind, BackendKind::External { transport: Transport::Tcp { address: "127.0.0.1:9000".into() } });
        assert_eq!(serde_json::to_string(&d).unwrap(), json);
        let empty = BackendDescriptor { capabilities: BTreeSet::new(), ..d };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn alphabets_have_declared_widths() {
        for cap in Capability::ALL {
            assert_eq!(cap.alphabet().len(), cap.width());
        }
        assert_eq!(Capability::Quintuple9Label.alphabet()[8], "NONE");
    }
}
