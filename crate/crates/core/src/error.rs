use std::fmt;

use crate::backends::Capability;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One rejected record from an import.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordError {
    /// The record could not be parsed or violates a structural rule.
    Parse { line: usize, message: String },
    /// An annotation lands entirely on text removed by normalization.
    SpanRemap { line: usize, message: String },
}

impl RecordError {
    pub fn line(&self) -> usize {
        match self {
            RecordError::Parse { line, .. } | RecordError::SpanRemap { line, .. } => *line,
        }
    }
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordError::Parse { line, message } => write!(f, "line {line}: parse error: {message}"),
            RecordError::SpanRemap { line, message } => {
                write!(f, "line {line}: span remap error: {message}")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown comparison label {0:?}")]
    UnknownLabel(String),
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("invalid span [{start}, {end}] for a sentence of {len} tokens")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("quintuple has no element present")]
    EmptyQuintuple,
    #[error("element spans of different kinds overlap at token {token} in sentence {sentence:?}")]
    OverlappingElements { sentence: String, token: usize },
    #[error("duplicate sentence id {0:?}")]
    DuplicateId(String),
    #[error("{} invalid record(s); first: {}", .0.len(), .0.first().map(|e| e.to_string()).unwrap_or_default())]
    InvalidRecords(Vec<RecordError>),

    #[error("no comparative sentences in corpus")]
    EmptyCorpus,
    #[error("predicate entries require a comparison label")]
    MissingLabel,
    #[error("no phrases available for slot {0}")]
    SlotUnavailable(String),
    #[error("template cannot be substituted: {0}")]
    InvalidTemplate(String),
    #[error("augmentation target unreachable: {0}")]
    TargetUnreachable(String),

    #[error("backend {backend:?} lacks capability {capability}")]
    CapabilityMissing { backend: String, capability: Capability },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend reported an error: {0}")]
    Backend(String),
    #[error("alignment error: expected {expected} rows, got {actual}")]
    Alignment { expected: usize, actual: usize },
    #[error("handshake failure: {0}")]
    HandshakeFailure(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("task mismatch: expected {expected}, found {found}")]
    TaskMismatch { expected: Capability, found: Capability },
    #[error("invalid model file: {0}")]
    InvalidModel(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("weight count mismatch: {weights} weights for {members} members")]
    WeightCountMismatch { weights: usize, members: usize },
    #[error("too few samples: {samples} for {k} folds")]
    TooFewSamples { samples: usize, k: usize },
    #[error("bootstrap member {index}: {source}")]
    Member { index: usize, source: Box<Error> },

    #[error("all element sets are empty")]
    AllSetsEmpty,
    #[error("stage {stage}: {source}")]
    Stage { stage: u8, source: Box<Error> },
    #[error("missing dataset version {0}")]
    MissingDatasetVersion(String),

    #[error("sentence ids differ between gold and predictions: {0}")]
    IdMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownLabel(_) => "UnknownLabel",
            Error::UnknownTag(_) => "UnknownTag",
            Error::InvalidSpan { .. } => "InvalidSpan",
            Error::EmptyQuintuple => "EmptyQuintuple",
            Error::OverlappingElements { .. } => "OverlappingElements",
            Error::DuplicateId(_) => "DuplicateId",
            Error::InvalidRecords(_) => "InvalidRecords",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::MissingLabel => "MissingLabel",
            Error::SlotUnavailable(_) => "SlotUnavailable",
            Error::InvalidTemplate(_) => "InvalidTemplate",
            Error::TargetUnreachable(_) => "TargetUnreachable",
            Error::CapabilityMissing { .. } => "CapabilityMissing",
            Error::BackendUnavailable(_) => "BackendUnavailable",
            Error::Backend(_) => "BackendError",
            Error::Alignment { .. } => "AlignmentError",
            Error::HandshakeFailure(_) => "HandshakeFailure",
            Error::Timeout(_) => "Timeout",
            Error::Protocol(_) => "ProtocolError",
            Error::EmptyTrainingSet => "EmptyTrainingSet",
            Error::TaskMismatch { .. } => "TaskMismatch",
            Error::InvalidModel(_) => "InvalidModel",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::WeightCountMismatch { .. } => "WeightCountMismatch",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::Member { .. } => "MemberError",
            Error::AllSetsEmpty => "AllSetsEmpty",
            Error::Stage { .. } => "StageError",
            Error::MissingDatasetVersion(_) => "MissingDatasetVersion",
            Error::IdMismatch(_) => "IdMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    pub(crate) fn at_stage(self, stage: u8) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}
