//! Domain types shared by every stage of the pipeline.
//!
//! Spans are inclusive token-index ranges over the whitespace tokenization of
//! a sentence's normalized text. Tokens also keep their character offsets so
//! exported files can be mapped back onto the text.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// The eight comparison types, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComparisonLabel {
    Dif,
    Eql,
    SupPos,
    SupNeg,
    Sup,
    ComPos,
    ComNeg,
    Com,
}

impl ComparisonLabel {
    pub const ALL: [ComparisonLabel; 8] = [
        ComparisonLabel::Dif,
        ComparisonLabel::Eql,
        ComparisonLabel::SupPos,
        ComparisonLabel::SupNeg,
        ComparisonLabel::Sup,
        ComparisonLabel::ComPos,
        ComparisonLabel::ComNeg,
        ComparisonLabel::Com,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComparisonLabel::Dif => "DIF",
            ComparisonLabel::Eql => "EQL",
            ComparisonLabel::SupPos => "SUP+",
            ComparisonLabel::SupNeg => "SUP-",
            ComparisonLabel::Sup => "SUP",
            ComparisonLabel::ComPos => "COM+",
            ComparisonLabel::ComNeg => "COM-",
            ComparisonLabel::Com => "COM",
        }
    }

    /// Position in [`ComparisonLabel::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

/// Case-sensitive parse of one of the eight label strings.
pub fn parse_label(text: &str) -> Result<ComparisonLabel> {
    ComparisonLabel::ALL
        .iter()
        .copied()
        .find(|l| l.as_str() == text)
        .ok_or_else(|| Error::UnknownLabel(text.to_string()))
}

impl FromStr for ComparisonLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_label(s)
    }
}

impl fmt::Display for ComparisonLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ComparisonLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ComparisonLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_label(&s).map_err(serde::de::Error::custom)
    }
}

/// Output alphabet of the quadruple classifier: the eight labels plus `NONE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StageLabel {
    Label(ComparisonLabel),
    None,
}

impl StageLabel {
    pub const COUNT: usize = 9;
    pub const NONE_INDEX: usize = 8;

    pub fn all() -> impl Iterator<Item = StageLabel> {
        ComparisonLabel::ALL
            .into_iter()
            .map(StageLabel::Label)
            .chain(std::iter::once(StageLabel::None))
    }

    pub fn index(self) -> usize {
        match self {
            StageLabel::Label(l) => l.index(),
            StageLabel::None => Self::NONE_INDEX,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            Self::NONE_INDEX => Some(StageLabel::None),
            i => ComparisonLabel::from_index(i).map(StageLabel::Label),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StageLabel::Label(l) => l.as_str(),
            StageLabel::None => "NONE",
        }
    }

    pub fn label(self) -> Option<ComparisonLabel> {
        match self {
            StageLabel::Label(l) => Some(l),
            StageLabel::None => None,
        }
    }
}

impl fmt::Display for StageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inclusive token range `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        TokenSpan { start, end }
    }

    pub fn single(index: usize) -> Self {
        TokenSpan { start: index, end: index }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, token: usize) -> bool {
        self.start <= token && token <= self.end
    }

    pub fn overlaps(&self, other: &TokenSpan) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.start <= self.end && self.end < len {
            Ok(())
        } else {
            Err(Error::InvalidSpan { start: self.start, end: self.end, len })
        }
    }

    pub fn tokens(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

impl Serialize for TokenSpan {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        [self.start, self.end].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TokenSpan {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let [start, end] = <[usize; 2]>::deserialize(deserializer)?;
        Ok(TokenSpan { start, end })
    }
}

/// The four element slots of a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Subject,
    Object,
    Aspect,
    Predicate,
}

impl ElementKind {
    pub const ALL: [ElementKind; 4] =
        [ElementKind::Subject, ElementKind::Object, ElementKind::Aspect, ElementKind::Predicate];

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Subject => "subject",
            ElementKind::Object => "object",
            ElementKind::Aspect => "aspect",
            ElementKind::Predicate => "predicate",
        }
    }

    /// Suffix used in the BIO tag names.
    pub fn tag_suffix(self) -> &'static str {
        match self {
            ElementKind::Subject => "SUB",
            ElementKind::Object => "OBJ",
            ElementKind::Aspect => "ASP",
            ElementKind::Predicate => "PRED",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ElementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ElementKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown element slot {s:?}")))
    }
}

/// Four optional element spans, the candidate unit of the last stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Quadruple {
    pub subject: Option<TokenSpan>,
    pub object: Option<TokenSpan>,
    pub aspect: Option<TokenSpan>,
    pub predicate: Option<TokenSpan>,
}

impl Quadruple {
    pub fn get(&self, kind: ElementKind) -> Option<TokenSpan> {
        match kind {
            ElementKind::Subject => self.subject,
            ElementKind::Object => self.object,
            ElementKind::Aspect => self.aspect,
            ElementKind::Predicate => self.predicate,
        }
    }

    pub fn set(&mut self, kind: ElementKind, span: Option<TokenSpan>) {
        match kind {
            ElementKind::Subject => self.subject = span,
            ElementKind::Object => self.object = span,
            ElementKind::Aspect => self.aspect = span,
            ElementKind::Predicate => self.predicate = span,
        }
    }

    pub fn is_empty(&self) -> bool {
        ElementKind::ALL.iter().all(|k| self.get(*k).is_none())
    }

    /// Present slots as `(kind, span)` pairs in slot order.
    pub fn elements(&self) -> impl Iterator<Item = (ElementKind, TokenSpan)> + '_ {
        ElementKind::ALL.into_iter().filter_map(|k| self.get(k).map(|s| (k, s)))
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyQuintuple);
        }
        self.elements().try_for_each(|(_, span)| span.validate(len))
    }

    pub fn with_label(self, label: ComparisonLabel) -> Quintuple {
        Quintuple {
            subject: self.subject,
            object: self.object,
            aspect: self.aspect,
            predicate: self.predicate,
            label,
        }
    }
}

/// A comparison: up to four element spans plus its type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quintuple {
    pub subject: Option<TokenSpan>,
    pub object: Option<TokenSpan>,
    pub aspect: Option<TokenSpan>,
    pub predicate: Option<TokenSpan>,
    pub label: ComparisonLabel,
}

impl Quintuple {
    pub fn quadruple(&self) -> Quadruple {
        Quadruple {
            subject: self.subject,
            object: self.object,
            aspect: self.aspect,
            predicate: self.predicate,
        }
    }

    pub fn get(&self, kind: ElementKind) -> Option<TokenSpan> {
        self.quadruple().get(kind)
    }

    pub fn set(&mut self, kind: ElementKind, span: Option<TokenSpan>) {
        let mut quad = self.quadruple();
        quad.set(kind, span);
        *self = quad.with_label(self.label);
    }

    pub fn elements(&self) -> impl Iterator<Item = (ElementKind, TokenSpan)> {
        let quad = self.quadruple();
        ElementKind::ALL.into_iter().filter_map(move |k| quad.get(k).map(|s| (k, s)))
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        self.quadruple().validate(len)
    }
}

/// A whitespace-delimited word and its character range in the sentence text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub chars: Range<usize>,
}

/// Splits `text` on whitespace, keeping character offsets.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut count = 0;
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(Token { text: std::mem::take(&mut current), chars: start..i });
            }
        } else {
            if current.is_empty() {
                start = i;
            }
            current.push(c);
        }
        count = i + 1;
    }
    if !current.is_empty() {
        tokens.push(Token { text: current, chars: start..count });
    }
    tokens
}

/// One review sentence with its gold or predicted quintuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    id: String,
    text: String,
    tokens: Vec<Token>,
    quintuples: Vec<Quintuple>,
}

impl Sentence {
    /// Builds a sentence from already-normalized text, tokenizing on
    /// whitespace and validating every quintuple against the tokens.
    pub fn new(id: impl Into<String>, text: impl Into<String>, quintuples: Vec<Quintuple>) -> Result<Self> {
        let text = text.into();
        let tokens = tokenize(&text);
        for q in &quintuples {
            q.validate(tokens.len())?;
        }
        Ok(Sentence { id: id.into(), text, tokens, quintuples })
    }

    /// Joins `words` with single spaces.
    pub fn from_words<S: AsRef<str>>(
        id: impl Into<String>,
        words: &[S],
        quintuples: Vec<Quintuple>,
    ) -> Result<Self> {
        let text = words.iter().map(|w| w.as_ref()).collect::<Vec<_>>().join(" ");
        let sentence = Sentence::new(id, text, quintuples)?;
        if sentence.tokens.len() != words.len() {
            return Err(Error::InvalidTemplate("words must be non-empty and whitespace-free".into()));
        }
        Ok(sentence)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn quintuples(&self) -> &[Quintuple] {
        &self.quintuples
    }

    pub fn is_comparative(&self) -> bool {
        !self.quintuples.is_empty()
    }

    /// Surface text of a span, words joined by single spaces.
    pub fn span_text(&self, span: TokenSpan) -> String {
        self.tokens[span.tokens()].iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Same text and tokens, different quintuples.
    pub fn with_quintuples(&self, quintuples: Vec<Quintuple>) -> Result<Self> {
        for q in &quintuples {
            q.validate(self.tokens.len())?;
        }
        Ok(Sentence { quintuples, ..self.clone() })
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    sentences: Vec<Sentence>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(sentences: Vec<Sentence>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &sentences {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(Dataset { sentences, provenance: Provenance::default() })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn into_sentences(self) -> Vec<Sentence> {
        self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sentence> {
        self.sentences.iter()
    }

    pub fn comparative(&self) -> impl Iterator<Item = &Sentence> {
        self.sentences.iter().filter(|s| s.is_comparative())
    }

    /// Sub-dataset of the sentences at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            sentences: indices.iter().map(|&i| self.sentences[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Sentence;
    type IntoIter = std::slice::Iter<'a, Sentence>;

    fn into_iter(self) -> Self::IntoIter {
        self.sentences.iter()
    }
}

/// The 9-tag BIO alphabet over the four element kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    O,
    B(ElementKind),
    I(ElementKind),
}

impl Tag {
    pub const COUNT: usize = 9;

    pub fn all() -> impl Iterator<Item = Tag> {
        (0..Self::COUNT).map(|i| Tag::from_id(i).expect("id in range"))
    }

    /// Fixed ids: O=0, then B/I pairs for subject, object, aspect, predicate.
    pub fn id(self) -> usize {
        match self {
            Tag::O => 0,
            Tag::B(k) => 1 + 2 * k.index(),
            Tag::I(k) => 2 + 2 * k.index(),
        }
    }

    pub fn from_id(id: usize) -> Option<Tag> {
        match id {
            0 => Some(Tag::O),
            1..=8 => {
                let kind = ElementKind::ALL[(id - 1) / 2];
                Some(if id % 2 == 1 { Tag::B(kind) } else { Tag::I(kind) })
            }
            _ => None,
        }
    }

    pub fn kind(self) -> Option<ElementKind> {
        match self {
            Tag::O => None,
            Tag::B(k) | Tag::I(k) => Some(k),
        }
    }

    pub fn name(self) -> String {
        match self {
            Tag::O => "O".to_string(),
            Tag::B(k) => format!("B-{}", k.tag_suffix()),
            Tag::I(k) => format!("I-{}", k.tag_suffix()),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tag::all().find(|t| t.name() == s).ok_or_else(|| Error::UnknownTag(s.to_string()))
    }
}

/// BIO projection of the union of all element spans in the sentence.
///
/// Same-kind spans shared between quintuples merge into one tag run. Spans of
/// different kinds that share a token are rejected.
pub fn tags_for_quintuples(sentence: &Sentence) -> Result<Vec<Tag>> {
    let n = sentence.len();
    let mut owner: Vec<Option<(ElementKind, TokenSpan)>> = vec![None; n];
    for q in sentence.quintuples() {
        for (kind, span) in q.elements() {
            span.validate(n)?;
            for t in span.tokens() {
                match owner[t] {
                    Some((k, _)) if k != kind => {
                        return Err(Error::OverlappingElements {
                            sentence: sentence.id().to_string(),
                            token: t,
                        })
                    }
                    Some((_, existing)) if existing.start <= span.start => {}
                    _ => owner[t] = Some((kind, span)),
                }
            }
        }
    }
    Ok(owner
        .iter()
        .enumerate()
        .map(|(t, o)| match o {
            None => Tag::O,
            Some((kind, span)) if span.start == t => Tag::B(*kind),
            Some((kind, _)) => Tag::I(*kind),
        })
        .collect())
}

/// Finite scores over a declared class alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogitVector(pub Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Self {
        LogitVector(values)
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Index of the largest score; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn one_hot(width: usize, index: usize) -> Self {
        let mut v = vec![0.0; width];
        v[index] = 1.0;
        LogitVector(v)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// One width-9 logit vector per token.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagLogits(pub Vec<LogitVector>);

impl TagLogits {
    pub fn rows(&self) -> &[LogitVector] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// One-hot logits that decode to exactly `tags`.
    pub fn from_tags(tags: &[Tag]) -> Self {
        TagLogits(tags.iter().map(|t| LogitVector::one_hot(Tag::COUNT, t.id())).collect())
    }

    pub fn argmax_tags(&self) -> Vec<Tag> {
        self.0.iter().map(|row| Tag::from_id(row.argmax()).unwrap_or(Tag::O)).collect()
    }
}

/// A dense tensor of logits viewed as a shape plus row-major values.
pub trait LogitTensor: Sized {
    fn shape(&self) -> Vec<usize>;
    fn flat(&self) -> Vec<f64>;
    fn from_flat(shape: &[usize], values: Vec<f64>) -> Result<Self>;
}

impl LogitTensor for LogitVector {
    fn shape(&self) -> Vec<usize> {
        vec![self.0.len()]
    }

    fn flat(&self) -> Vec<f64> {
        self.0.clone()
    }

    fn from_flat(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        match shape {
            [w] if *w == values.len() => Ok(LogitVector(values)),
            _ => Err(Error::ShapeMismatch(format!("cannot build a vector of shape {shape:?}"))),
        }
    }
}

impl LogitTensor for TagLogits {
    fn shape(&self) -> Vec<usize> {
        let width = self.0.first().map_or(0, |r| r.width());
        if self.0.iter().any(|r| r.width() != width) {
            // Ragged rows never compare equal to a rectangular shape.
            return vec![self.0.len(), usize::MAX];
        }
        vec![self.0.len(), width]
    }

    fn flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|r| r.0.iter().copied()).collect()
    }

    fn from_flat(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        match shape {
            [rows, width] if rows * width == values.len() => Ok(TagLogits(if *width == 0 {
                vec![LogitVector(Vec::new()); *rows]
            } else {
                values.chunks(*width).map(|c| LogitVector(c.to_vec())).collect()
            })),
            _ => Err(Error::ShapeMismatch(format!("cannot build tag logits of shape {shape:?}"))),
        }
    }
}
