//! Exact-match quintuple scoring with per-label macro averaging, plus
//! per-stage diagnostics.
//!
//! A prediction counts only when all five fields equal a gold quintuple of
//! the same sentence; each gold quintuple can be matched once.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{ElementSets, SentenceTrace};
use crate::types::{ComparisonLabel, Dataset, ElementKind, Quintuple, Sentence};

/// Which labels enter the macro average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// Labels absent from both gold and predictions are skipped.
    #[default]
    SkipAbsent,
    /// All eight labels; an absent label scores 0.
    Fixed8,
}

/// Greedy one-to-one matching; returns `(prediction, gold)` index pairs.
pub fn match_quintuples(gold: &[Quintuple], pred: &[Quintuple]) -> Vec<(usize, usize)> {
    let mut used = vec![false; gold.len()];
    let mut matches = Vec::new();
    for (p, q) in pred.iter().enumerate() {
        if let Some(g) = (0..gold.len()).find(|&g| !used[g] && gold[g] == *q) {
            used[g] = true;
            matches.push((p, g));
        }
    }
    matches
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: ComparisonLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanScores {
    pub kind: ElementKind,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub stage1: BinaryScores,
    pub stage2: Vec<SpanScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub averaging: Averaging,
    pub sentences: usize,
    /// Labels that entered the average, in label order.
    pub labels: Vec<LabelScore>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1: Option<BinaryScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2: Option<Vec<SpanScores>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Pairs the sentences of `gold` and `pred` by id.
fn align<'a>(gold: &'a Dataset, pred: &'a Dataset) -> Result<Vec<(&'a Sentence, &'a Sentence)>> {
    let by_id: HashMap<&str, &Sentence> = pred.iter().map(|s| (s.id(), s)).collect();
    let gold_ids: BTreeSet<&str> = gold.iter().map(|s| s.id()).collect();
    if let Some(extra) = pred.iter().find(|s| !gold_ids.contains(s.id())) {
        return Err(Error::IdMismatch(format!("{:?} is only in the predictions", extra.id())));
    }
    gold.iter()
        .map(|g| {
            by_id
                .get(g.id())
                .map(|p| (g, *p))
                .ok_or_else(|| Error::IdMismatch(format!("{:?} is only in the gold data", g.id())))
        })
        .collect()
}

/// E-T5 macro precision, recall and F1 over comparison labels.
pub fn e_t5_macro(gold: &Dataset, pred: &Dataset, averaging: Averaging) -> Result<EvalReport> {
    let pairs = align(gold, pred)?;
    let mut counts: BTreeMap<ComparisonLabel, (usize, usize, usize)> = BTreeMap::new();
    for (g, p) in &pairs {
        for q in g.quintuples() {
            counts.entry(q.label).or_default().0 += 1;
        }
        for q in p.quintuples() {
            counts.entry(q.label).or_default().1 += 1;
        }
        for (pi, _) in match_quintuples(g.quintuples(), p.quintuples()) {
            counts.entry(p.quintuples()[pi].label).or_default().2 += 1;
        }
    }
    let labels: Vec<LabelScore> = ComparisonLabel::ALL
        .into_iter()
        .filter_map(|label| {
            let (gold_n, pred_n, matched) = counts.get(&label).copied().unwrap_or_default();
            if averaging == Averaging::SkipAbsent && gold_n + pred_n == 0 {
                return None;
            }
            let precision = ratio(matched, pred_n);
            let recall = ratio(matched, gold_n);
            Some(LabelScore { label, precision, recall, f1: f1(precision, recall), gold: gold_n, predicted: pred_n, matched })
        })
        .collect();
    let mean = |f: fn(&LabelScore) -> f64| {
        if labels.is_empty() {
            0.0
        } else {
            labels.iter().map(f).sum::<f64>() / labels.len() as f64
        }
    };
    Ok(EvalReport {
        averaging,
        sentences: pairs.len(),
        macro_precision: mean(|l| l.precision),
        macro_recall: mean(|l| l.recall),
        macro_f1: mean(|l| l.f1),
        labels,
        stage1: None,
        stage2: None,
        provenance: None,
    })
}

/// Stage 1 as binary classification, stage 2 as exact span match per kind.
pub fn stage_metrics(gold: &Dataset, traces: &[SentenceTrace]) -> Result<StageMetrics> {
    let by_id: HashMap<&str, &SentenceTrace> = traces.iter().map(|t| (t.id.as_str(), t)).collect();
    if by_id.len() != traces.len() || traces.len() != gold.len() {
        return Err(Error::IdMismatch(format!("{} traces for {} sentences", traces.len(), gold.len())));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    let mut spans = [(0usize, 0usize, 0usize); 4];
    for s in gold {
        let t = by_id.get(s.id()).ok_or_else(|| Error::IdMismatch(format!("no trace for {:?}", s.id())))?;
        match (s.is_comparative(), t.comparative) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
        let gold_sets = ElementSets::from_quintuples(s.quintuples());
        for kind in ElementKind::ALL {
            let (g, p) = (gold_sets.get(kind), t.sets.get(kind));
            let entry = &mut spans[kind.index()];
            entry.0 += g.len();
            entry.1 += p.len();
            entry.2 += p.iter().filter(|span| g.contains(span)).count();
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let stage1 = BinaryScores {
        accuracy: ratio(tp + tn, gold.len()),
        precision,
        recall,
        f1: f1(precision, recall),
        true_positive: tp,
        false_positive: fp,
        false_negative: fn_,
        true_negative: tn,
    };
    let stage2 = ElementKind::ALL
        .into_iter()
        .map(|kind| {
            let (g, p, m) = spans[kind.index()];
            let (precision, recall) = (ratio(m, p), ratio(m, g));
            SpanScores { kind, precision, recall, f1: f1(precision, recall), gold: g, predicted: p, matched: m }
        })
        .collect();
    Ok(StageMetrics { stage1, stage2 })
}

impl EvalReport {
    /// Aligned text table with four decimals.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<6} {:>9} {:>9} {:>9} {:>6} {:>6}", "LABEL", "P", "R", "F1", "GOLD", "PRED");
        for l in &self.labels {
            let _ = writeln!(
                out,
                "{:<6} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>6}",
                l.label.as_str(),
                l.precision,
                l.recall,
                l.f1,
                l.gold,
                l.predicted
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>9} {:>9} {:>9}", "MACRO-F1", "MACRO-P", "MACRO-R");
        let _ = writeln!(out, "{:>9.4} {:>9.4} {:>9.4}", self.macro_f1, self.macro_precision, self.macro_recall);
        if let Some(s1) = &self.stage1 {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<8} {:>9} {:>9} {:>9} {:>9}", "STAGE-1", "ACC", "P", "R", "F1");
            let _ = writeln!(out, "{:<8} {:>9.4} {:>9.4} {:>9.4} {:>9.4}", "", s1.accuracy, s1.precision, s1.recall, s1.f1);
        }
        if let Some(s2) = &self.stage2 {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<10} {:>9} {:>9} {:>9}", "STAGE-2", "P", "R", "F1");
            for s in s2 {
                let _ = writeln!(out, "{:<10} {:>9.4} {:>9.4} {:>9.4}", s.kind.name(), s.precision, s.recall, s.f1);
            }
        }
        out
    }
}
