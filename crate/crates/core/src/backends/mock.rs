use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Backend, Capability};
use crate::error::{Error, Result};
use crate::types::{LogitVector, Quadruple, Sentence, StageLabel, Tag, TagLogits};

/// Fixed answers for a [`MockBackend`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockFixture {
    pub name: String,
    pub capabilities: BTreeSet<Capability>,
    /// Returned for every sentence.
    pub sentence: Vec<f64>,
    /// Word to tag name; unlisted words are tagged `O`.
    pub tags: BTreeMap<String, String>,
    /// Returned for every quadruple.
    pub quadruple: Vec<f64>,
    /// Drop this many trailing rows from every tag response.
    pub drop_rows: usize,
}

impl Default for MockFixture {
    fn default() -> Self {
        MockFixture {
            name: "mock".into(),
            capabilities: Capability::ALL.into_iter().collect(),
            sentence: vec![0.0, 1.0],
            tags: BTreeMap::new(),
            quadruple: LogitVector::one_hot(StageLabel::COUNT, StageLabel::NONE_INDEX).0,
            drop_rows: 0,
        }
    }
}

/// Deterministic backend answering from a [`MockFixture`]; used for protocol
/// conformance and pipeline tests.
#[derive(Debug, Clone)]
pub struct MockBackend {
    fixture: MockFixture,
    tags: BTreeMap<String, Tag>,
}

impl MockBackend {
    pub fn new(fixture: MockFixture) -> Result<Self> {
        let tags = fixture
            .tags
            .iter()
            .map(|(w, t)| Ok((w.clone(), t.parse::<Tag>()?)))
            .collect::<Result<_>>()?;
        Ok(MockBackend { fixture, tags })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::new(serde_json::from_str(json)?)
    }

    pub fn fixture(&self) -> &MockFixture {
        &self.fixture
    }

    fn check(&self, capability: Capability) -> Result<()> {
        if self.fixture.capabilities.contains(&capability) {
            Ok(())
        } else {
            Err(Error::CapabilityMissing { backend: self.fixture.name.clone(), capability })
        }
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        &self.fixture.name
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        self.fixture.capabilities.clone()
    }

    fn sentence_logits(&self, batch: &[Sentence]) -> Result<Vec<LogitVector>> {
        self.check(Capability::Sentence2Way)?;
        Ok(vec![LogitVector(self.fixture.sentence.clone()); batch.len()])
    }

    fn token_logits(&self, batch: &[Sentence]) -> Result<Vec<TagLogits>> {
        self.check(Capability::Token9Tag)?;
        Ok(batch
            .iter()
            .map(|s| {
                let tags: Vec<Tag> = s.words().map(|w| self.tags.get(w).copied().unwrap_or(Tag::O)).collect();
                let keep = tags.len().saturating_sub(self.fixture.drop_rows);
                TagLogits::from_tags(&tags[..keep])
            })
            .collect())
    }

    fn quadruple_logits(&self, _sentence: &Sentence, quads: &[Quadruple]) -> Result<Vec<LogitVector>> {
        self.check(Capability::Quintuple9Label)?;
        Ok(vec![LogitVector(self.fixture.quadruple.clone()); quads.len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{classify_quadruple, classify_sentence, tag_tokens};
    use crate::types::TokenSpan;

    fn sentence(text: &str) -> Sentence {
        Sentence::new("s", text, vec![]).unwrap()
    }

    #[test]
    fn fixed_answers() {
        let mock = MockBackend::new(MockFixture::default()).unwrap();
        let s = sentence("a b c d e");
        assert_eq!(classify_sentence(&mock, std::slice::from_ref(&s)).unwrap()[0].0, [0.0, 1.0]);
        assert!(classify_sentence(&mock, &[]).unwrap().is_empty());
        let rows = tag_tokens(&mock, std::slice::from_ref(&s)).unwrap();
        assert_eq!((rows[0].len(), rows[0].rows()[0].width()), (5, 9));
        let quad = Quadruple { subject: Some(TokenSpan::single(0)), ..Default::default() };
        assert_eq!(classify_quadruple(&mock, &s, &quad).unwrap().argmax(), StageLabel::NONE_INDEX);
    }

    #[test]
    fn short_tag_responses_are_alignment_errors() {
        let mock = MockBackend::new(MockFixture { drop_rows: 1, ..Default::default() }).unwrap();
        let err = tag_tokens(&mock, &[sentence("a b c d e")]).unwrap_err();
        assert!(matches!(err, Error::Alignment { expected: 5, actual: 4 }));
    }

    #[test]
    fn empty_quadruple_is_rejected() {
        let mock = MockBackend::new(MockFixture::default()).unwrap();
        assert!(classify_quadruple(&mock, &sentence("a b"), &Quadruple::default()).is_err());
    }

    #[test]
    fn unknown_tag_in_fixture() {
        assert!(matches!(MockBackend::from_json(r#"{"tags":{"a":"B-XYZ"}}"#), Err(Error::UnknownTag(_))));
    }
}
