//! Dictionary-substitution augmentation.
//!
//! Gold element phrases are collected per slot, with predicates bucketed by
//! the comparison label of the quintuple that owns them. A synthetic sentence
//! is a comparative template whose element spans are replaced by phrases
//! drawn from those dictionaries; the new quintuple takes the label of the
//! bucket its predicate was drawn from.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::normalize_text;
use crate::types::{ComparisonLabel, Dataset, ElementKind, Provenance, Quintuple, Sentence, TokenSpan};

/// Per-label quintuple counts of the upsampled dataset (version 2).
pub const VERSION2_LABEL_COUNTS: [(ComparisonLabel, usize); 8] = [
    (ComparisonLabel::Dif, 410),
    (ComparisonLabel::Eql, 1788),
    (ComparisonLabel::SupPos, 334),
    (ComparisonLabel::SupNeg, 288),
    (ComparisonLabel::Sup, 308),
    (ComparisonLabel::ComPos, 2980),
    (ComparisonLabel::ComNeg, 854),
    (ComparisonLabel::Com, 346),
];

/// Per-label quintuple counts of the class-balanced dataset (version 3).
pub const VERSION3_LABEL_COUNTS: [(ComparisonLabel, usize); 8] = [
    (ComparisonLabel::Dif, 536),
    (ComparisonLabel::Eql, 557),
    (ComparisonLabel::SupPos, 597),
    (ComparisonLabel::SupNeg, 610),
    (ComparisonLabel::Sup, 545),
    (ComparisonLabel::ComPos, 770),
    (ComparisonLabel::ComNeg, 597),
    (ComparisonLabel::Com, 638),
];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementDictionaries {
    subjects: Vec<String>,
    objects: Vec<String>,
    aspects: Vec<String>,
    predicates: BTreeMap<ComparisonLabel, Vec<String>>,
}

impl ElementDictionaries {
    /// Phrases for a non-predicate slot, or every predicate across buckets.
    pub fn phrases(&self, slot: ElementKind) -> Vec<&str> {
        match slot {
            ElementKind::Subject => self.subjects.iter().map(String::as_str).collect(),
            ElementKind::Object => self.objects.iter().map(String::as_str).collect(),
            ElementKind::Aspect => self.aspects.iter().map(String::as_str).collect(),
            ElementKind::Predicate => self.predicates.values().flatten().map(String::as_str).collect(),
        }
    }

    pub fn predicates(&self, label: ComparisonLabel) -> &[String] {
        self.predicates.get(&label).map_or(&[], Vec::as_slice)
    }

    /// Labels with a non-empty predicate bucket, in label order.
    pub fn predicate_labels(&self) -> Vec<ComparisonLabel> {
        self.predicates.iter().filter(|(_, v)| !v.is_empty()).map(|(l, _)| *l).collect()
    }

    pub fn is_slot_empty(&self, slot: ElementKind) -> bool {
        match slot {
            ElementKind::Predicate => self.predicate_labels().is_empty(),
            _ => self.list(slot).is_empty(),
        }
    }

    fn list(&self, slot: ElementKind) -> &Vec<String> {
        match slot {
            ElementKind::Subject => &self.subjects,
            ElementKind::Object => &self.objects,
            ElementKind::Aspect => &self.aspects,
            ElementKind::Predicate => unreachable!("predicates are bucketed"),
        }
    }

    fn insert(&mut self, slot: ElementKind, label: Option<ComparisonLabel>, phrase: &str) {
        let phrase = normalize_text(phrase).0;
        if phrase.is_empty() {
            return;
        }
        let list = match (slot, label) {
            (ElementKind::Subject, _) => &mut self.subjects,
            (ElementKind::Object, _) => &mut self.objects,
            (ElementKind::Aspect, _) => &mut self.aspects,
            (ElementKind::Predicate, Some(l)) => self.predicates.entry(l).or_default(),
            (ElementKind::Predicate, None) => return,
        };
        if !list.contains(&phrase) {
            list.push(phrase);
        }
    }
}

/// A predicate phrase seen under more than one label in gold data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryWarning {
    pub phrase: String,
    pub labels: Vec<ComparisonLabel>,
}

#[derive(Debug, Clone)]
pub struct BuiltDictionaries {
    pub dictionaries: ElementDictionaries,
    pub warnings: Vec<DictionaryWarning>,
}

/// Collects every gold element phrase into its slot.
pub fn build_dictionaries(dataset: &Dataset) -> Result<BuiltDictionaries> {
    let mut dicts = ElementDictionaries::default();
    let mut predicate_labels: BTreeMap<String, BTreeSet<ComparisonLabel>> = BTreeMap::new();
    let mut any = false;
    for s in dataset.comparative() {
        any = true;
        for q in s.quintuples() {
            for (kind, span) in q.elements() {
                let phrase = s.span_text(span);
                if kind == ElementKind::Predicate {
                    predicate_labels.entry(normalize_text(&phrase).0).or_default().insert(q.label);
                    dicts.insert(kind, Some(q.label), &phrase);
                } else {
                    dicts.insert(kind, None, &phrase);
                }
            }
        }
    }
    if !any {
        return Err(Error::EmptyCorpus);
    }
    let warnings = predicate_labels
        .into_iter()
        .filter(|(_, labels)| labels.len() > 1)
        .map(|(phrase, labels)| DictionaryWarning { phrase, labels: labels.into_iter().collect() })
        .collect();
    Ok(BuiltDictionaries { dictionaries: dicts, warnings })
}

/// Adds external phrases to one slot. Predicate entries need a label.
pub fn merge_wordlist<S: AsRef<str>>(
    mut dicts: ElementDictionaries,
    slot: ElementKind,
    entries: &[S],
    label: Option<ComparisonLabel>,
) -> Result<ElementDictionaries> {
    match (slot, label) {
        (ElementKind::Predicate, None) => return Err(Error::MissingLabel),
        (ElementKind::Predicate, Some(_)) | (_, None) => {}
        (_, Some(_)) => {
            return Err(Error::InvalidConfig(format!("{slot} entries do not take a label")));
        }
    }
    for e in entries {
        dicts.insert(slot, label, e.as_ref());
    }
    Ok(dicts)
}

/// One phrase per line; blank lines and `#` comments are skipped.
pub fn parse_wordlist(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| normalize_text(l).0)
        .collect()
}

pub fn read_wordlist(path: impl AsRef<Path>) -> Result<Vec<String>> {
    Ok(parse_wordlist(&fs::read_to_string(path)?))
}

/// Merges every wordlist found in `dir`: `subjects.txt`, `objects.txt`,
/// `aspects.txt` and `predicates.<LABEL>.txt` (e.g. `predicates.SUP-.txt`).
/// Missing files are skipped; other files are ignored.
pub fn merge_wordlist_dir(mut dicts: ElementDictionaries, dir: impl AsRef<Path>) -> Result<ElementDictionaries> {
    let dir = dir.as_ref();
    for (file, slot) in [
        ("subjects.txt", ElementKind::Subject),
        ("objects.txt", ElementKind::Object),
        ("aspects.txt", ElementKind::Aspect),
    ] {
        let path = dir.join(file);
        if path.exists() {
            dicts = merge_wordlist(dicts, slot, &read_wordlist(path)?, None)?;
        }
    }
    for label in ComparisonLabel::ALL {
        let path = dir.join(format!("predicates.{label}.txt"));
        if path.exists() {
            dicts = merge_wordlist(dicts, ElementKind::Predicate, &read_wordlist(path)?, Some(label))?;
        }
    }
    Ok(dicts)
}

/// Distinct element spans of a template, ordered by position.
fn template_spans(template: &Sentence) -> Result<Vec<(ElementKind, TokenSpan)>> {
    let distinct: BTreeSet<(TokenSpan, ElementKind)> =
        template.quintuples().iter().flat_map(|q| q.elements()).map(|(k, s)| (s, k)).collect();
    let spans: Vec<(ElementKind, TokenSpan)> = distinct.into_iter().map(|(s, k)| (k, s)).collect();
    for pair in spans.windows(2) {
        if pair[0].1.overlaps(&pair[1].1) {
            return Err(Error::InvalidTemplate(format!(
                "{}: {} {:?} overlaps {} {:?}",
                template.id(),
                pair[0].0,
                pair[0].1,
                pair[1].0,
                pair[1].1
            )));
        }
    }
    Ok(spans)
}

/// Replaces every element span of a comparative template with a phrase drawn
/// uniformly from its slot. Each distinct predicate span first draws a label
/// bucket uniformly, and every quintuple using that predicate takes the label.
/// Quintuples without a predicate keep their template label.
pub fn synthesize_sentence<R: Rng + ?Sized>(
    template: &Sentence,
    dicts: &ElementDictionaries,
    rng: &mut R,
) -> Result<Sentence> {
    if !template.is_comparative() {
        return Err(Error::InvalidTemplate(format!("{} is not comparative", template.id())));
    }
    let spans = template_spans(template)?;
    let predicate_labels = dicts.predicate_labels();

    let mut words: Vec<String> = Vec::with_capacity(template.len());
    let mut remapped: BTreeMap<(ElementKind, TokenSpan), TokenSpan> = BTreeMap::new();
    let mut chosen_label: BTreeMap<TokenSpan, ComparisonLabel> = BTreeMap::new();
    let mut next = 0;
    let tokens = template.tokens();

    for &(kind, span) in &spans {
        words.extend(tokens[next..span.start].iter().map(|t| t.text.clone()));
        let phrase: &str = if kind == ElementKind::Predicate {
            let label = *predicate_labels.choose(rng).ok_or_else(|| Error::SlotUnavailable(kind.to_string()))?;
            chosen_label.insert(span, label);
            dicts.predicates(label).choose(rng).expect("bucket is non-empty")
        } else {
            dicts.list(kind).choose(rng).ok_or_else(|| Error::SlotUnavailable(kind.to_string()))?
        };
        let start = words.len();
        words.extend(phrase.split_whitespace().map(str::to_string));
        remapped.insert((kind, span), TokenSpan::new(start, words.len() - 1));
        next = span.end + 1;
    }
    words.extend(tokens[next..].iter().map(|t| t.text.clone()));

    let quintuples = template
        .quintuples()
        .iter()
        .map(|q| {
            let mut out = *q;
            for (kind, span) in q.elements() {
                out.set(kind, Some(remapped[&(kind, span)]));
            }
            if let Some(p) = q.predicate {
                out.label = chosen_label[&p];
            }
            out
        })
        .collect();
    Sentence::from_words(template.id(), &words, quintuples)
}

/// Whether target counts are for the synthetic part alone or for the union of
/// source and synthetic data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetBasis {
    #[default]
    Synthetic,
    Combined,
}

fn default_max_attempts() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub targets: BTreeMap<ComparisonLabel, usize>,
    pub seed: u64,
    /// Consecutive rejected candidates tolerated before giving up.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
    #[serde(default)]
    pub basis: TargetBasis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
}

impl AugmentSpec {
    pub fn new(targets: impl IntoIterator<Item = (ComparisonLabel, usize)>, seed: u64) -> Self {
        AugmentSpec {
            targets: targets.into_iter().collect(),
            seed,
            max_attempts: default_max_attempts(),
            basis: TargetBasis::Synthetic,
            version: None,
        }
    }

    /// Combined counts of the upsampled dataset version.
    pub fn version2(seed: u64) -> Self {
        AugmentSpec { basis: TargetBasis::Combined, version: Some("v2".into()), ..Self::new(VERSION2_LABEL_COUNTS, seed) }
    }

    /// Combined counts of the class-balanced dataset version.
    pub fn version3(seed: u64) -> Self {
        AugmentSpec { basis: TargetBasis::Combined, version: Some("v3".into()), ..Self::new(VERSION3_LABEL_COUNTS, seed) }
    }

    /// Targets as fractions of `total` quintuples, rounded to the nearest count.
    pub fn from_fractions(fractions: &[(ComparisonLabel, f64)], total: usize, seed: u64) -> Result<Self> {
        let mut targets = Vec::new();
        for &(label, f) in fractions {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidConfig(format!("fraction {f} for {label} outside [0, 1]")));
            }
            targets.push((label, (f * total as f64).round() as usize));
        }
        Ok(Self::new(targets, seed))
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::InvalidConfig("augment spec targets no label".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidConfig("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Appends seeded synthetic sentences to `source` until every label's
/// synthetic (or combined) quintuple count equals its target.
///
/// Candidates that would overshoot any label are discarded whole.
pub fn generate_dataset(source: &Dataset, dicts: &ElementDictionaries, spec: &AugmentSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut existing = [0usize; 8];
    for q in source.iter().flat_map(|s| s.quintuples()) {
        existing[q.label.index()] += 1;
    }
    let mut need = [0usize; 8];
    for (&label, &target) in &spec.targets {
        need[label.index()] = match spec.basis {
            TargetBasis::Synthetic => target,
            TargetBasis::Combined => target.checked_sub(existing[label.index()]).ok_or_else(|| {
                Error::TargetUnreachable(format!(
                    "source already has {} {label} quintuples, target is {target}",
                    existing[label.index()]
                ))
            })?,
        };
    }

    let comparative: Vec<&Sentence> = source.comparative().collect();
    if comparative.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let templates: Vec<&Sentence> = comparative
        .into_iter()
        .filter(|s| {
            template_spans(s).is_ok_and(|spans| spans.iter().all(|(k, _)| !dicts.is_slot_empty(*k)))
        })
        .collect();

    let has_predicate_template = templates.iter().any(|s| s.quintuples().iter().any(|q| q.predicate.is_some()));
    let buckets = dicts.predicate_labels();
    for label in ComparisonLabel::ALL {
        if need[label.index()] == 0 {
            continue;
        }
        let via_predicate = has_predicate_template && buckets.contains(&label);
        let via_template = templates
            .iter()
            .any(|s| s.quintuples().iter().any(|q| q.predicate.is_none() && q.label == label));
        if !via_predicate && !via_template {
            return Err(Error::TargetUnreachable(format!("no predicate bucket or template can yield {label}")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let taken: HashSet<&str> = source.iter().map(|s| s.id()).collect();
    let mut synthetic = Vec::new();
    let mut failures = 0;
    while need.iter().any(|&n| n > 0) {
        let template = templates[rng.gen_range(0..templates.len())];
        let candidate = synthesize_sentence(template, dicts, &mut rng)?;
        let mut counts = [0usize; 8];
        for q in candidate.quintuples() {
            counts[q.label.index()] += 1;
        }
        if counts.iter().zip(&need).all(|(c, n)| c <= n) {
            for (n, c) in need.iter_mut().zip(counts) {
                *n -= c;
            }
            let mut id = format!("syn-{}-{:06}", spec.seed, synthetic.len());
            while taken.contains(id.as_str()) {
                id.push('_');
            }
            synthetic.push(candidate.with_id(id));
            failures = 0;
        } else {
            failures += 1;
            if failures >= spec.max_attempts {
                let remaining: Vec<String> = ComparisonLabel::ALL
                    .iter()
                    .filter(|l| need[l.index()] > 0)
                    .map(|l| format!("{l}: {}", need[l.index()]))
                    .collect();
                return Err(Error::TargetUnreachable(format!(
                    "{} consecutive candidates rejected; still needed {}",
                    spec.max_attempts,
                    remaining.join(", ")
                )));
            }
        }
    }

    let mut sentences = source.sentences().to_vec();
    sentences.extend(synthetic);
    Ok(Dataset::new(sentences)?.with_provenance(Provenance { version: spec.version.clone(), seed: Some(spec.seed) }))
}

/// Label counts over all quintuples of `dataset`, in label order.
pub fn label_counts(dataset: &Dataset) -> BTreeMap<ComparisonLabel, usize> {
    let mut counts: BTreeMap<ComparisonLabel, usize> = ComparisonLabel::ALL.iter().map(|l| (*l, 0)).collect();
    for q in dataset.iter().flat_map(|s| s.quintuples()) {
        *counts.entry(q.label).or_default() += 1;
    }
    counts
}

/// Whether every quintuple's predicate phrase sits in the bucket of its label.
pub fn labels_follow_predicates(sentence: &Sentence, dicts: &ElementDictionaries) -> bool {
    sentence.quintuples().iter().all(|q: &Quintuple| match q.predicate {
        Some(p) => dicts.predicates(q.label).contains(&sentence.span_text(p)),
        None => true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::tags_for_quintuples;
    use ComparisonLabel::*;

    fn span(s: usize, e: usize) -> Option<TokenSpan> {
        Some(TokenSpan::new(s, e))
    }

    fn a_tot_hon_b() -> Sentence {
        let q = Quintuple { subject: span(0, 0), object: span(3, 3), aspect: None, predicate: span(1, 2), label: ComPos };
        Sentence::new("s1", "A tốt hơn B", vec![q]).unwrap()
    }

    #[test]
    fn dictionaries_from_one_sentence() {
        let built = build_dictionaries(&Dataset::new(vec![a_tot_hon_b()]).unwrap()).unwrap();
        let d = built.dictionaries;
        assert_eq!(d.phrases(ElementKind::Subject), ["A"]);
        assert_eq!(d.phrases(ElementKind::Object), ["B"]);
        assert!(d.phrases(ElementKind::Aspect).is_empty());
        assert_eq!(d.predicates(ComPos), ["tốt hơn"]);
        assert!(built.warnings.is_empty());
    }

    #[test]
    fn conflicting_predicate_labels_warn() {
        let a = a_tot_hon_b();
        let q = Quintuple { subject: span(0, 0), object: None, aspect: None, predicate: span(1, 2), label: Com };
        let b = Sentence::new("s2", "C tốt hơn", vec![q]).unwrap();
        let built = build_dictionaries(&Dataset::new(vec![a, b]).unwrap()).unwrap();
        assert_eq!(built.dictionaries.predicates(ComPos), ["tốt hơn"]);
        assert_eq!(built.dictionaries.predicates(Com), ["tốt hơn"]);
        assert_eq!(built.warnings, [DictionaryWarning { phrase: "tốt hơn".into(), labels: vec![ComPos, Com] }]);
    }

    #[test]
    fn no_comparative_sentences_is_empty_corpus() {
        let ds = Dataset::new(vec![Sentence::new("x", "a b", vec![]).unwrap()]).unwrap();
        assert!(matches!(build_dictionaries(&ds), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn merge_dedups_and_requires_labels() {
        let d = merge_wordlist(ElementDictionaries::default(), ElementKind::Subject, &["iPhone 15", "Galaxy S23"], None).unwrap();
        let d = merge_wordlist(d, ElementKind::Subject, &["iPhone\u{00A0}15"], None).unwrap();
        assert_eq!(d.phrases(ElementKind::Subject), ["iPhone 15", "Galaxy S23"]);
        assert!(matches!(merge_wordlist(d.clone(), ElementKind::Predicate, &["x"], None), Err(Error::MissingLabel)));
        let d = merge_wordlist(d, ElementKind::Predicate, &["vượt trội hơn"], Some(ComPos)).unwrap();
        assert_eq!(d.predicates(ComPos), ["vượt trội hơn"]);
    }

    #[test]
    fn wordlist_comments_are_ignored() {
        assert_eq!(parse_wordlist("# phones\niPhone 15\n\n  Pixel 8 \n#x"), ["iPhone 15", "Pixel 8"]);
    }

    #[test]
    fn longer_subject_shifts_spans() {
        let dicts = ElementDictionaries {
            subjects: vec!["iPhone 15".into()],
            objects: vec!["B".into()],
            aspects: vec![],
            predicates: [(SupNeg, vec!["tốt hơn".to_string()])].into_iter().collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = synthesize_sentence(&a_tot_hon_b(), &dicts, &mut rng).unwrap();
        assert_eq!(out.text(), "iPhone 15 tốt hơn B");
        let q = out.quintuples()[0];
        assert_eq!((q.subject, q.predicate, q.object), (span(0, 1), span(2, 3), span(4, 4)));
        assert_eq!(q.label, SupNeg);
        assert!(tags_for_quintuples(&out).is_ok());
    }

    #[test]
    fn own_phrases_are_a_fixpoint() {
        let t = a_tot_hon_b();
        let dicts = build_dictionaries(&Dataset::new(vec![t.clone()]).unwrap()).unwrap().dictionaries;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(synthesize_sentence(&t, &dicts, &mut rng).unwrap(), t);
    }

    #[test]
    fn missing_slot_is_reported() {
        let dicts = ElementDictionaries { subjects: vec!["A".into()], ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(synthesize_sentence(&a_tot_hon_b(), &dicts, &mut rng), Err(Error::SlotUnavailable(_))));
    }

    #[test]
    fn shared_predicate_gives_both_quintuples_one_label() {
        let q1 = Quintuple { subject: span(0, 0), object: span(3, 3), aspect: None, predicate: span(1, 2), label: ComPos };
        let q2 = Quintuple { subject: span(0, 0), object: span(5, 5), aspect: None, predicate: span(1, 2), label: ComPos };
        let t = Sentence::new("t", "A tốt hơn B và C", vec![q1, q2]).unwrap();
        let mut dicts = build_dictionaries(&Dataset::new(vec![t.clone()]).unwrap()).unwrap().dictionaries;
        dicts = merge_wordlist(dicts, ElementKind::Predicate, &["kém hơn"], Some(ComNeg)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let out = synthesize_sentence(&t, &dicts, &mut rng).unwrap();
            assert_eq!(out.quintuples()[0].label, out.quintuples()[1].label);
            assert_eq!(out.quintuples()[0].subject, out.quintuples()[1].subject);
            assert!(labels_follow_predicates(&out, &dicts));
        }
    }

    fn toy_dicts() -> ElementDictionaries {
        let mut d = build_dictionaries(&Dataset::new(vec![a_tot_hon_b()]).unwrap()).unwrap().dictionaries;
        for (i, l) in ComparisonLabel::ALL.iter().enumerate() {
            d = merge_wordlist(d, ElementKind::Predicate, &[format!("p{i} hơn")], Some(*l)).unwrap();
        }
        d
    }

    #[test]
    fn two_per_label() {
        let source = Dataset::new(vec![a_tot_hon_b()]).unwrap();
        let spec = AugmentSpec::new(ComparisonLabel::ALL.map(|l| (l, 2)), 7);
        let out = generate_dataset(&source, &toy_dicts(), &spec).unwrap();
        let synthetic: Vec<&Sentence> = out.iter().filter(|s| s.id().starts_with("syn-")).collect();
        assert_eq!(synthetic.len(), 16);
        let synth = Dataset::new(synthetic.into_iter().cloned().collect()).unwrap();
        assert!(label_counts(&synth).values().all(|&c| c == 2));
        assert_eq!(out.provenance.seed, Some(7));
    }

    #[test]
    fn generation_is_deterministic() {
        let source = Dataset::new(vec![a_tot_hon_b()]).unwrap();
        let spec = AugmentSpec::new([(Dif, 5), (Com, 3)], 42);
        let a = generate_dataset(&source, &toy_dicts(), &spec).unwrap();
        let b = generate_dataset(&source, &toy_dicts(), &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn label_without_bucket_is_unreachable() {
        let source = Dataset::new(vec![a_tot_hon_b()]).unwrap();
        let dicts = build_dictionaries(&source).unwrap().dictionaries;
        let spec = AugmentSpec::new([(SupNeg, 1)], 0);
        assert!(matches!(generate_dataset(&source, &dicts, &spec), Err(Error::TargetUnreachable(_))));
    }

    #[test]
    fn combined_target_below_source_is_unreachable() {
        let source = Dataset::new(vec![a_tot_hon_b()]).unwrap();
        let spec = AugmentSpec { basis: TargetBasis::Combined, ..AugmentSpec::new([(ComPos, 0)], 0) };
        assert!(matches!(generate_dataset(&source, &toy_dicts(), &spec), Err(Error::TargetUnreachable(_))));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = AugmentSpec::version3(9);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"SUP-\":610"));
        assert_eq!(serde_json::from_str::<AugmentSpec>(&json).unwrap(), spec);
        let minimal: AugmentSpec = serde_json::from_str(r#"{"targets":{"COM":2},"seed":1}"#).unwrap();
        assert_eq!(minimal.max_attempts, 10_000);
        assert_eq!(minimal.basis, TargetBasis::Synthetic);
    }
}
