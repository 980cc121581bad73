//! Reading, cleaning, linting and summarizing annotated review data.
//!
//! Review text scraped from the web carries non-breaking spaces and
//! zero-width characters that silently change word indexing. Every importer
//! runs the raw text through [`normalize_text`] and remaps annotation spans
//! through the resulting [`IndexMap`] before tokenizing.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, RecordError, Result};
use crate::types::{
    parse_label, tags_for_quintuples, tokenize, ComparisonLabel, Dataset, ElementKind, Quintuple,
    Sentence, Token, TokenSpan,
};

const NBSP: char = '\u{00A0}';
const ZERO_WIDTH: [char; 4] = ['\u{200B}', '\u{FEFF}', '\u{200C}', '\u{200D}'];

/// Monotone partial map from raw character indices to clean ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    targets: Vec<Option<usize>>,
    clean_len: usize,
}

impl IndexMap {
    pub fn get(&self, raw: usize) -> Option<usize> {
        self.targets.get(raw).copied().flatten()
    }

    pub fn raw_len(&self) -> usize {
        self.targets.len()
    }

    pub fn clean_len(&self) -> usize {
        self.clean_len
    }

    pub fn is_identity(&self) -> bool {
        self.clean_len == self.targets.len()
            && self.targets.iter().enumerate().all(|(i, t)| *t == Some(i))
    }

    /// Maps a raw half-open character range onto the clean text using its
    /// first and last surviving characters. `None` when nothing survives.
    pub fn map_range(&self, raw: Range<usize>) -> Option<Range<usize>> {
        let end = raw.end.min(self.targets.len());
        let start = raw.start.min(end);
        let slice = &self.targets[start..end];
        let first = slice.iter().find_map(|t| *t)?;
        let last = slice.iter().rev().find_map(|t| *t)?;
        Some(first..last + 1)
    }
}

/// Replaces non-breaking spaces, deletes zero-width characters, collapses
/// whitespace runs to one space and trims both ends.
pub fn normalize_text(raw: &str) -> (String, IndexMap) {
    let mut clean = String::with_capacity(raw.len());
    let mut clean_len = 0usize;
    let mut targets = Vec::new();
    // Raw index of the first character in the pending whitespace run.
    let mut pending_space: Option<usize> = None;

    for (i, c) in raw.chars().enumerate() {
        targets.push(None);
        if ZERO_WIDTH.contains(&c) {
            continue;
        }
        if c == NBSP || c.is_whitespace() {
            pending_space.get_or_insert(i);
            continue;
        }
        if let Some(first) = pending_space.take() {
            if clean_len > 0 {
                clean.push(' ');
                targets[first] = Some(clean_len);
                clean_len += 1;
            }
        }
        clean.push(c);
        targets[i] = Some(clean_len);
        clean_len += 1;
    }
    (clean, IndexMap { targets, clean_len })
}

/// Input file layouts understood by [`import_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    /// One JSON object per line: `id`, `text`, `quintuples`.
    CanonicalJsonl,
    /// Blank-line separated blocks: a sentence line (optionally `id<TAB>text`)
    /// followed by one JSON line per quintuple whose elements are lists of
    /// `"<1-based word index>&&<word>"` strings.
    VlspRaw,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical-jsonl" | "jsonl" => Ok(Format::CanonicalJsonl),
            "vlsp-raw" | "vlsp" => Ok(Format::VlspRaw),
            other => Err(Error::InvalidConfig(format!("unknown format {other:?}"))),
        }
    }
}

/// A successfully imported dataset and the non-fatal issues seen on the way.
#[derive(Debug, Clone)]
pub struct Imported {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

/// Reads a dataset file, normalizing every sentence.
///
/// All invalid records are collected and returned together as
/// [`Error::InvalidRecords`].
pub fn import_dataset(path: impl AsRef<Path>, format: Format) -> Result<Imported> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    match format {
        Format::CanonicalJsonl => parse_canonical(reader),
        Format::VlspRaw => {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sentence");
            parse_vlsp_raw(reader, stem)
        }
    }
}

/// Shorthand for importing canonical JSONL and discarding warnings.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Ok(import_dataset(path, Format::CanonicalJsonl)?.dataset)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CanonicalRecord {
    id: String,
    text: String,
    #[serde(default)]
    quintuples: Vec<RawQuintuple>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuintuple {
    subject: Option<[usize; 2]>,
    object: Option<[usize; 2]>,
    aspect: Option<[usize; 2]>,
    predicate: Option<[usize; 2]>,
    label: String,
}

#[derive(Serialize)]
struct CanonicalOut<'a> {
    id: &'a str,
    text: &'a str,
    quintuples: &'a [Quintuple],
}

pub fn parse_canonical(reader: impl BufRead) -> Result<Imported> {
    let mut sentences = Vec::new();
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let mut ids = HashSet::new();

    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CanonicalRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                errors.push(RecordError::Parse { line: line_no, message: e.to_string() });
                continue;
            }
        };
        let mut raw = Vec::with_capacity(record.quintuples.len());
        let mut bad_label = None;
        for q in &record.quintuples {
            match parse_label(&q.label) {
                Ok(label) => raw.push(([q.subject, q.object, q.aspect, q.predicate], label)),
                Err(e) => bad_label = Some(e.to_string()),
            }
        }
        if let Some(message) = bad_label {
            errors.push(RecordError::Parse { line: line_no, message: format!("{}: {message}", record.id) });
            continue;
        }
        if !ids.insert(record.id.clone()) {
            errors.push(RecordError::Parse { line: line_no, message: format!("duplicate id {:?}", record.id) });
            continue;
        }
        match build_sentence(&record.id, &record.text, &raw, line_no, &mut warnings) {
            Ok(s) => sentences.push(s),
            Err(e) => errors.push(e),
        }
    }

    if !errors.is_empty() {
        return Err(Error::InvalidRecords(errors));
    }
    Ok(Imported { dataset: Dataset::new(sentences)?, warnings })
}

type RawSpans = [Option<[usize; 2]>; 4];

/// Normalizes `text`, remaps raw-token spans onto the clean tokens and
/// validates the result.
fn build_sentence(
    id: &str,
    text: &str,
    raw_quintuples: &[(RawSpans, ComparisonLabel)],
    line: usize,
    warnings: &mut Vec<String>,
) -> std::result::Result<Sentence, RecordError> {
    let raw_tokens = tokenize(text);
    let (clean, map) = normalize_text(text);
    let clean_tokens = tokenize(&clean);
    let parse_err = |message: String| RecordError::Parse { line, message: format!("{id}: {message}") };

    let mut quintuples = Vec::with_capacity(raw_quintuples.len());
    for (qi, (spans, label)) in raw_quintuples.iter().enumerate() {
        let mut out = [None; 4];
        for (slot, raw) in spans.iter().enumerate() {
            let Some([start, end]) = *raw else { continue };
            let kind = ElementKind::ALL[slot];
            if start > end || end >= raw_tokens.len() {
                return Err(parse_err(format!(
                    "quintuple {qi} {kind} span [{start}, {end}] out of bounds for {} tokens",
                    raw_tokens.len()
                )));
            }
            let chars = raw_tokens[start].chars.start..raw_tokens[end].chars.end;
            let mapped = map.map_range(chars).ok_or_else(|| RecordError::SpanRemap {
                line,
                message: format!("{id}: quintuple {qi} {kind} span [{start}, {end}] covers only deleted text"),
            })?;
            let span = clean_span(&clean_tokens, mapped).ok_or_else(|| RecordError::SpanRemap {
                line,
                message: format!("{id}: quintuple {qi} {kind} span [{start}, {end}] does not align with words"),
            })?;
            let before: Vec<&str> = raw_tokens[start..=end].iter().map(|t| t.text.as_str()).collect();
            let after: Vec<&str> = clean_tokens[span.tokens()].iter().map(|t| t.text.as_str()).collect();
            let before_norm = normalize_text(&before.join(" ")).0;
            if before_norm != after.join(" ") {
                warnings.push(format!(
                    "line {line}: {id}: {kind} {:?} remapped to {:?}",
                    before.join(" "),
                    after.join(" ")
                ));
            } else if (start, end) != (span.start, span.end) {
                warnings.push(format!(
                    "line {line}: {id}: {kind} span [{start}, {end}] reindexed to [{}, {}]",
                    span.start, span.end
                ));
            }
            out[slot] = Some(span);
        }
        let q = Quintuple { subject: out[0], object: out[1], aspect: out[2], predicate: out[3], label: *label };
        if q.quadruple().is_empty() {
            return Err(parse_err(format!("quintuple {qi} has no elements")));
        }
        quintuples.push(q);
    }
    Sentence::new(id, clean, quintuples).map_err(|e| parse_err(e.to_string()))
}

fn clean_span(tokens: &[Token], chars: Range<usize>) -> Option<TokenSpan> {
    let first = tokens.iter().position(|t| t.chars.contains(&chars.start))?;
    let last = tokens.iter().position(|t| t.chars.contains(&(chars.end - 1)))?;
    Some(TokenSpan::new(first, last))
}

#[derive(Deserialize)]
struct VlspQuintuple {
    #[serde(default)]
    subject: Vec<String>,
    #[serde(default)]
    object: Vec<String>,
    #[serde(default)]
    aspect: Vec<String>,
    #[serde(default)]
    predicate: Vec<String>,
    label: String,
}

pub fn parse_vlsp_raw(reader: impl BufRead, stem: &str) -> Result<Imported> {
    let mut lines = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        lines.push((n + 1, line?));
    }

    let mut sentences = Vec::new();
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let mut ids = HashSet::new();
    let mut block_no = 0;

    let mut i = 0;
    while i < lines.len() {
        if lines[i].1.trim().is_empty() {
            i += 1;
            continue;
        }
        block_no += 1;
        let (head_line, head) = (lines[i].0, lines[i].1.clone());
        i += 1;
        let mut tuple_lines = Vec::new();
        while i < lines.len() && !lines[i].1.trim().is_empty() {
            tuple_lines.push(lines[i].clone());
            i += 1;
        }

        let (id, text) = match head.split_once('\t') {
            Some((id, text)) => (id.trim().to_string(), text.to_string()),
            None => (format!("{stem}#{block_no}"), head),
        };
        if !ids.insert(id.clone()) {
            errors.push(RecordError::Parse { line: head_line, message: format!("duplicate id {id:?}") });
            continue;
        }

        let raw_tokens = tokenize(&text);
        let mut raw = Vec::new();
        let mut failed = false;
        for (line_no, line) in &tuple_lines {
            match vlsp_tuple(line, &raw_tokens, &id, *line_no, &mut warnings) {
                Ok(t) => raw.push(t),
                Err(e) => {
                    errors.push(e);
                    failed = true;
                }
            }
        }
        if failed {
            continue;
        }
        match build_sentence(&id, &text, &raw, head_line, &mut warnings) {
            Ok(s) => sentences.push(s),
            Err(e) => errors.push(e),
        }
    }

    if !errors.is_empty() {
        return Err(Error::InvalidRecords(errors));
    }
    Ok(Imported { dataset: Dataset::new(sentences)?, warnings })
}

fn vlsp_tuple(
    line: &str,
    raw_tokens: &[Token],
    id: &str,
    line_no: usize,
    warnings: &mut Vec<String>,
) -> std::result::Result<(RawSpans, ComparisonLabel), RecordError> {
    let parse_err = |message: String| RecordError::Parse { line: line_no, message: format!("{id}: {message}") };
    let record: VlspQuintuple = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
    let label = parse_label(&record.label).map_err(|e| parse_err(e.to_string()))?;
    let mut spans = [None; 4];
    for (slot, items) in [&record.subject, &record.object, &record.aspect, &record.predicate].into_iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        let mut indices = Vec::with_capacity(items.len());
        for item in items {
            let (index, word) = item
                .split_once("&&")
                .ok_or_else(|| parse_err(format!("element {item:?} is not of the form index&&word")))?;
            let index: usize = index.trim().parse().map_err(|_| parse_err(format!("bad word index in {item:?}")))?;
            if index == 0 || index > raw_tokens.len() {
                return Err(parse_err(format!("word index {index} out of bounds for {} tokens", raw_tokens.len())));
            }
            let expected = normalize_text(&raw_tokens[index - 1].text).0;
            if normalize_text(word).0 != expected {
                warnings.push(format!("line {line_no}: {id}: word {index} is {expected:?}, annotation says {word:?}"));
            }
            indices.push(index - 1);
        }
        indices.sort_unstable();
        indices.dedup();
        let (start, end) = (indices[0], indices[indices.len() - 1]);
        if end + 1 - start != indices.len() {
            warnings.push(format!(
                "line {line_no}: {id}: {} words are not contiguous; using [{start}, {end}]",
                ElementKind::ALL[slot]
            ));
        }
        spans[slot] = Some([start, end]);
    }
    Ok((spans, label))
}

/// One canonical JSONL line (no trailing newline).
pub fn canonical_line(sentence: &Sentence) -> String {
    let out = CanonicalOut { id: sentence.id(), text: sentence.text(), quintuples: sentence.quintuples() };
    serde_json::to_string(&out).expect("canonical records always serialize")
}

pub fn write_canonical(dataset: &Dataset, mut writer: impl Write) -> Result<()> {
    for s in dataset {
        writeln!(writer, "{}", canonical_line(s))?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes canonical JSONL, one sentence per line in dataset order.
pub fn export_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_canonical(dataset, BufWriter::new(File::create(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LintRule {
    /// Predicate longer than the configured token limit.
    R1,
    /// Missing predicate, or span out of bounds / overlapping across kinds.
    R2,
    /// Duplicate quintuple within one sentence.
    R3,
}

impl LintRule {
    pub fn description(self) -> &'static str {
        match self {
            LintRule::R1 => "excessively long predicate",
            LintRule::R2 => "wrong or missing quintuple",
            LintRule::R3 => "redundant or wrong components",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LintConfig {
    pub max_predicate_tokens: usize,
}

impl Default for LintConfig {
    fn default() -> Self {
        LintConfig { max_predicate_tokens: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub rule: LintRule,
    pub sentence: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintReport {
    pub findings: Vec<LintFinding>,
}

impl LintReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn count(&self, rule: LintRule) -> usize {
        self.findings.iter().filter(|f| f.rule == rule).count()
    }

    /// Folds import failures in as R2 findings, keyed by line number.
    pub fn with_record_errors(mut self, errors: &[RecordError]) -> Self {
        for e in errors {
            self.findings.push(LintFinding {
                rule: LintRule::R2,
                sentence: format!("line:{:06}", e.line()),
                detail: e.to_string(),
            });
        }
        self.sort();
        self
    }

    fn sort(&mut self) {
        self.findings.sort_by(|a, b| (&a.sentence, a.rule).cmp(&(&b.sentence, b.rule)));
    }

    pub fn render_table(&self) -> String {
        let width = self.findings.iter().map(|f| f.sentence.len()).max().unwrap_or(8).max(8);
        let mut out = format!("{:<4}  {:<width$}  detail\n", "rule", "sentence");
        for f in &self.findings {
            let _ = writeln!(out, "{:<4}  {:<width$}  {}", format!("{:?}", f.rule), f.sentence, f.detail);
        }
        for rule in [LintRule::R1, LintRule::R2, LintRule::R3] {
            let _ = writeln!(out, "{:?} {}: {}", rule, rule.description(), self.count(rule));
        }
        out
    }
}

pub fn lint_dataset(dataset: &Dataset, config: &LintConfig) -> LintReport {
    let mut findings = Vec::new();
    for s in dataset {
        let push = |findings: &mut Vec<LintFinding>, rule, detail| {
            findings.push(LintFinding { rule, sentence: s.id().to_string(), detail })
        };
        for (qi, q) in s.quintuples().iter().enumerate() {
            match q.predicate {
                Some(p) if p.len() > config.max_predicate_tokens => push(
                    &mut findings,
                    LintRule::R1,
                    format!("quintuple {qi}: predicate {:?} has {} tokens (limit {})", s.span_text(p), p.len(), config.max_predicate_tokens),
                ),
                Some(_) => {}
                None => push(&mut findings, LintRule::R2, format!("quintuple {qi} ({}) has no predicate", q.label)),
            }
            if let Err(e) = q.validate(s.len()) {
                push(&mut findings, LintRule::R2, format!("quintuple {qi}: {e}"));
            }
            if s.quintuples()[..qi].contains(q) {
                push(&mut findings, LintRule::R3, format!("quintuple {qi} duplicates an earlier quintuple"));
            }
        }
        if let Err(Error::OverlappingElements { token, .. }) = tags_for_quintuples(s) {
            push(&mut findings, LintRule::R2, format!("element spans of different kinds overlap at token {token}"));
        }
    }
    let mut report = LintReport { findings };
    report.sort();
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Count {
    pub count: usize,
    pub percent: f64,
}

impl Count {
    fn of(count: usize, total: usize) -> Self {
        let percent = if total == 0 { 0.0 } else { 100.0 * count as f64 / total as f64 };
        Count { count, percent }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: ComparisonLabel,
    #[serde(flatten)]
    pub count: Count,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementCounts {
    pub subject: usize,
    pub object: usize,
    pub aspect: usize,
    pub predicate: usize,
}

/// Sentence, label and element statistics of a dataset.
///
/// Comparative/non-comparative percentages are over all sentences,
/// mono/multi over comparative sentences, labels over all quintuples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub sentences: usize,
    pub quintuples: usize,
    pub comparative: Count,
    pub non_comparative: Count,
    pub mono_comparative: Count,
    pub multi_comparative: Count,
    pub labels: Vec<LabelCount>,
    pub elements: ElementCounts,
}

impl StatsReport {
    pub fn label(&self, label: ComparisonLabel) -> Count {
        self.labels[label.index()].count
    }

    /// Aligned table in the layout of the dataset summary tables.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, section: &str, name: &str, c: Count| {
            let _ = writeln!(out, "{section:<9} {name:<18} {:>7} {:>7.2}%", c.count, c.percent);
        };
        let _ = writeln!(out, "{:<9} {:<18} {:>7} {:>8}", "", "Type", "Number", "Percent");
        row(&mut out, "Sentence", "Mono-comparative", self.mono_comparative);
        row(&mut out, "Sentence", "Multi-comparative", self.multi_comparative);
        row(&mut out, "Sentence", "Comparative", self.comparative);
        row(&mut out, "Sentence", "Non-comparative", self.non_comparative);
        for l in &self.labels {
            row(&mut out, "Label", l.label.as_str(), l.count);
        }
        let e = &self.elements;
        for (name, n) in [
            ("Subject entity", e.subject),
            ("Object entity", e.object),
            ("Aspect entity", e.aspect),
            ("Predicate entity", e.predicate),
        ] {
            let _ = writeln!(out, "{:<9} {name:<18} {n:>7}", "Element");
        }
        out
    }
}

pub fn dataset_stats(dataset: &Dataset) -> StatsReport {
    let total = dataset.len();
    let comparative = dataset.comparative().count();
    let multi = dataset.iter().filter(|s| s.quintuples().len() >= 2).count();
    let mut label_counts = [0usize; 8];
    let mut elements = [0usize; 4];
    let mut quintuples = 0;
    for q in dataset.iter().flat_map(|s| s.quintuples()) {
        quintuples += 1;
        label_counts[q.label.index()] += 1;
        for (kind, _) in q.elements() {
            elements[kind.index()] += 1;
        }
    }
    StatsReport {
        sentences: total,
        quintuples,
        comparative: Count::of(comparative, total),
        non_comparative: Count::of(total - comparative, total),
        mono_comparative: Count::of(comparative - multi, comparative),
        multi_comparative: Count::of(multi, comparative),
        labels: ComparisonLabel::ALL
            .iter()
            .map(|&label| LabelCount { label, count: Count::of(label_counts[label.index()], quintuples) })
            .collect(),
        elements: ElementCounts {
            subject: elements[0],
            object: elements[1],
            aspect: elements[2],
            predicate: elements[3],
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical(text: &str) -> Result<Imported> {
        parse_canonical(text.as_bytes())
    }

    #[test]
    fn nbsp_becomes_space() {
        let (clean, map) = normalize_text("giá\u{00A0}rẻ");
        assert_eq!(clean, "giá rẻ");
        assert_eq!((0..6).map(|i| map.get(i)).collect::<Vec<_>>(), (0..6).map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn zero_width_is_deleted() {
        let (clean, map) = normalize_text("tốt\u{200B}hơn");
        assert_eq!(clean, "tốthơn");
        assert_eq!(map.get(2), Some(2));
        assert_eq!(map.get(3), None);
        assert_eq!(map.get(4), Some(3));
        assert_eq!(map.get(6), Some(5));
    }

    #[test]
    fn whitespace_runs_collapse_and_trim() {
        let (clean, map) = normalize_text("  a  b ");
        assert_eq!(clean, "a b");
        let mapped: Vec<_> = (0..7).map(|i| map.get(i)).collect();
        assert_eq!(mapped, [None, None, Some(0), Some(1), None, Some(2), None]);
    }

    #[test]
    fn normalization_is_idempotent() {
        let (clean, _) = normalize_text("\u{FEFF} A\u{00A0}\u{00A0}tốt\u{200D} hơn\tB ");
        let (again, map) = normalize_text(&clean);
        assert_eq!(again, clean);
        assert!(map.is_identity());
    }

    #[test]
    fn imports_one_canonical_sentence() {
        let line = r#"{"id":"s1","text":"A tốt hơn B","quintuples":[{"subject":[0,0],"object":[3,3],"aspect":null,"predicate":[1,2],"label":"COM+"}]}"#;
        let imported = canonical(line).unwrap();
        assert_eq!(imported.dataset.len(), 1);
        let s = &imported.dataset.sentences()[0];
        assert!(s.is_comparative());
        assert_eq!(s.span_text(s.quintuples()[0].predicate.unwrap()), "tốt hơn");
        assert_eq!(canonical_line(s), line);
    }

    #[test]
    fn empty_input_is_empty_dataset() {
        assert!(canonical("").unwrap().dataset.is_empty());
    }

    #[test]
    fn out_of_bounds_span_is_reported_with_line() {
        let text = concat!(
            r#"{"id":"ok","text":"a b","quintuples":[]}"#,
            "\n",
            r#"{"id":"bad","text":"a b c d","quintuples":[{"subject":[5,5],"object":null,"aspect":null,"predicate":null,"label":"EQL"}]}"#,
            "\n",
            "not json\n"
        );
        match canonical(text) {
            Err(Error::InvalidRecords(errors)) => {
                assert_eq!(errors.len(), 2);
                assert!(matches!(&errors[0], RecordError::Parse { line: 2, message } if message.contains("bad")));
                assert_eq!(errors[1].line(), 3);
            }
            other => panic!("expected invalid records, got {other:?}"),
        }
    }

    #[test]
    fn spans_are_remapped_through_normalization() {
        // raw tokens: "A", U+200B, "tốt", "hơn", "B"; the zero-width token vanishes.
        let line = r#"{"id":"s","text":"A \u200b tốt\u00a0hơn B","quintuples":[{"subject":[0,0],"object":[4,4],"aspect":null,"predicate":[2,3],"label":"COM+"}]}"#;
        let imported = canonical(line).unwrap();
        let s = &imported.dataset.sentences()[0];
        assert_eq!(s.text(), "A tốt hơn B");
        let q = s.quintuples()[0];
        assert_eq!(q.predicate, Some(TokenSpan::new(1, 2)));
        assert_eq!(q.object, Some(TokenSpan::new(3, 3)));
        assert!(!imported.warnings.is_empty());
    }

    #[test]
    fn span_on_deleted_text_is_a_remap_error() {
        let line = r#"{"id":"s","text":"A \u200b B","quintuples":[{"subject":[1,1],"object":null,"aspect":null,"predicate":null,"label":"COM"}]}"#;
        match canonical(line) {
            Err(Error::InvalidRecords(errors)) => assert!(matches!(errors[0], RecordError::SpanRemap { line: 1, .. })),
            other => panic!("expected remap error, got {other:?}"),
        }
    }

    #[test]
    fn vlsp_raw_blocks() {
        let raw = "iPhone tốt hơn Samsung\n{\"subject\": [\"1&&iPhone\"], \"object\": [\"4&&Samsung\"], \"aspect\": [], \"predicate\": [\"2&&tốt\", \"3&&hơn\"], \"label\": \"COM+\"}\n\nshop giao hàng nhanh\n\n";
        let imported = parse_vlsp_raw(raw.as_bytes(), "train").unwrap();
        let ds = imported.dataset;
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.sentences()[0].id(), "train#1");
        let q = ds.sentences()[0].quintuples()[0];
        assert_eq!(q.predicate, Some(TokenSpan::new(1, 2)));
        assert_eq!(q.aspect, None);
        assert!(!ds.sentences()[1].is_comparative());
    }

    #[test]
    fn vlsp_raw_rejects_bad_index() {
        let raw = "a b\n{\"subject\": [\"9&&x\"], \"label\": \"COM\"}\n";
        assert!(matches!(parse_vlsp_raw(raw.as_bytes(), "t"), Err(Error::InvalidRecords(_))));
    }

    fn sentence(id: &str, text: &str, qs: Vec<Quintuple>) -> Sentence {
        Sentence::new(id, text, qs).unwrap()
    }

    fn q(sub: Option<(usize, usize)>, pred: Option<(usize, usize)>, label: ComparisonLabel) -> Quintuple {
        let s = |x: Option<(usize, usize)>| x.map(|(a, b)| TokenSpan::new(a, b));
        Quintuple { subject: s(sub), object: None, aspect: None, predicate: s(pred), label }
    }

    #[test]
    fn lint_rules() {
        let words: Vec<String> = (0..14).map(|i| format!("w{i}")).collect();
        let long = sentence("a", &words.join(" "), vec![q(Some((0, 0)), Some((1, 12)), ComparisonLabel::ComPos)]);
        let nopred = sentence("b", "x y", vec![q(Some((0, 0)), None, ComparisonLabel::Eql)]);
        let dup = q(Some((0, 0)), Some((1, 1)), ComparisonLabel::Dif);
        let dups = sentence("c", "x y", vec![dup, dup]);
        let report = lint_dataset(&Dataset::new(vec![dups, long, nopred]).unwrap(), &LintConfig::default());
        let rules: Vec<_> = report.findings.iter().map(|f| (f.sentence.as_str(), f.rule)).collect();
        assert_eq!(rules, [("a", LintRule::R1), ("b", LintRule::R2), ("c", LintRule::R3)]);

        let loose = LintConfig { max_predicate_tokens: 12 };
        assert_eq!(lint_dataset(&Dataset::new(vec![sentence("a", &words.join(" "), vec![q(Some((0, 0)), Some((1, 12)), ComparisonLabel::ComPos)])]).unwrap(), &loose).count(LintRule::R1), 0);
    }

    #[test]
    fn lint_flags_cross_kind_overlap() {
        let mut bad = q(Some((0, 1)), Some((1, 2)), ComparisonLabel::Com);
        bad.object = None;
        let report = lint_dataset(&Dataset::new(vec![sentence("o", "a b c", vec![bad])]).unwrap(), &LintConfig::default());
        assert_eq!(report.count(LintRule::R2), 1);
    }

    #[test]
    fn stats_of_empty_dataset() {
        let stats = dataset_stats(&Dataset::default());
        assert_eq!(stats.sentences, 0);
        assert_eq!(stats.comparative, Count { count: 0, percent: 0.0 });
        assert!(stats.labels.iter().all(|l| l.count.count == 0 && l.count.percent == 0.0));
    }

    #[test]
    fn stats_by_hand() {
        let multi = sentence(
            "m",
            "a b c",
            vec![q(Some((0, 0)), Some((1, 1)), ComparisonLabel::Eql), q(None, Some((2, 2)), ComparisonLabel::ComPos)],
        );
        let plain = sentence("p", "x y", vec![]);
        let stats = dataset_stats(&Dataset::new(vec![multi, plain]).unwrap());
        assert_eq!(stats.comparative, Count { count: 1, percent: 50.0 });
        assert_eq!(stats.multi_comparative.count, 1);
        assert_eq!(stats.label(ComparisonLabel::Eql).count, 1);
        assert_eq!(stats.label(ComparisonLabel::ComPos).count, 1);
        assert_eq!(stats.elements.subject, 1);
        assert_eq!(stats.elements.predicate, 2);
    }
}
