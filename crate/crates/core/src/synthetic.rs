//! A seeded, templated Vietnamese product-review corpus covering all eight
//! comparison labels. Useful for smoke tests and desk-scale experiments; it
//! is deliberately easy.
//!
//! ```
//! use comom::synthetic::{synthetic_corpus, SyntheticConfig};
//!
//! let corpus = synthetic_corpus(&SyntheticConfig { sentences: 50, seed: 7, ..Default::default() });
//! assert_eq!(corpus.len(), 50);
//! assert!(corpus.comparative().count() > 0);
//! ```

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::types::{ComparisonLabel, Dataset, Provenance, Quintuple, Sentence, TokenSpan};

pub const PRODUCTS: &[&str] =
    &["iPhone 15", "Galaxy S23", "Xiaomi 13T", "Oppo Reno 10", "Pixel 8", "Vivo V29", "Nokia G22", "Realme 11"];

pub const ASPECTS: &[&str] = &["pin", "camera", "màn hình", "hiệu năng", "thiết kế", "loa", "sạc nhanh", "độ bền"];

/// Predicate phrases of one label; the sets of different labels are disjoint.
pub fn predicates(label: ComparisonLabel) -> &'static [&'static str] {
    match label {
        ComparisonLabel::ComPos => &["tốt hơn", "mượt hơn", "đẹp hơn", "bền hơn"],
        ComparisonLabel::ComNeg => &["kém hơn", "tệ hơn", "yếu hơn", "chậm hơn"],
        ComparisonLabel::Com => &["to hơn", "dày hơn", "nặng hơn", "dài hơn"],
        ComparisonLabel::SupPos => &["tốt nhất", "đẹp nhất", "mượt nhất"],
        ComparisonLabel::SupNeg => &["tệ nhất", "kém nhất", "yếu nhất"],
        ComparisonLabel::Sup => &["to nhất", "nặng nhất", "dày nhất"],
        ComparisonLabel::Eql => &["ngang", "tương đương", "giống", "bằng"],
        ComparisonLabel::Dif => &["khác", "khác với", "không giống"],
    }
}

fn is_superlative(label: ComparisonLabel) -> bool {
    matches!(label, ComparisonLabel::SupPos | ComparisonLabel::SupNeg | ComparisonLabel::Sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub sentences: usize,
    pub seed: u64,
    /// Share of comparative sentences.
    pub comparative_fraction: f64,
    /// Share of comparative sentences carrying two quintuples.
    pub multi_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { sentences: 500, seed: 0, comparative_fraction: 0.7, multi_fraction: 0.2 }
    }
}

#[derive(Default)]
struct Builder {
    words: Vec<String>,
}

impl Builder {
    fn push(&mut self, phrase: &str) -> TokenSpan {
        let start = self.words.len();
        self.words.extend(phrase.split_whitespace().map(str::to_string));
        TokenSpan::new(start, self.words.len() - 1)
    }
}

struct Slots<'a> {
    subject: &'a str,
    object: &'a str,
    aspect: &'a str,
}

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty vocabulary")
}

fn single<R: Rng>(rng: &mut R, label: ComparisonLabel, s: &Slots) -> (Builder, Quintuple) {
    let mut b = Builder::default();
    let predicate = pick(rng, predicates(label));
    let (sub, obj, asp, pred);
    if is_superlative(label) {
        obj = None;
        match rng.gen_range(0..4) {
            0 => {
                sub = Some(b.push(s.subject));
                b.push("có");
                asp = Some(b.push(s.aspect));
                pred = b.push(predicate);
            }
            1 => {
                asp = Some(b.push(s.aspect));
                b.push("của");
                sub = Some(b.push(s.subject));
                b.push("là");
                pred = b.push(predicate);
                b.push("trong phân khúc");
            }
            2 => {
                b.push("trong tầm giá này");
                sub = Some(b.push(s.subject));
                pred = b.push(predicate);
                b.push("về");
                asp = Some(b.push(s.aspect));
            }
            _ => {
                sub = Some(b.push(s.subject));
                b.push("là máy");
                pred = b.push(predicate);
                asp = None;
            }
        }
    } else {
        match rng.gen_range(0..5) {
            0 => {
                sub = Some(b.push(s.subject));
                b.push("có");
                asp = Some(b.push(s.aspect));
                pred = b.push(predicate);
                obj = Some(b.push(s.object));
            }
            1 => {
                asp = Some(b.push(s.aspect));
                b.push("của");
                sub = Some(b.push(s.subject));
                pred = b.push(predicate);
                obj = Some(b.push(s.object));
            }
            2 => {
                sub = Some(b.push(s.subject));
                pred = b.push(predicate);
                obj = Some(b.push(s.object));
                b.push("về");
                asp = Some(b.push(s.aspect));
            }
            3 => {
                b.push("mình thấy");
                sub = Some(b.push(s.subject));
                pred = b.push(predicate);
                obj = Some(b.push(s.object));
                asp = None;
            }
            _ => {
                b.push("so với");
                obj = Some(b.push(s.object));
                b.push("thì");
                asp = Some(b.push(s.aspect));
                sub = Some(b.push(s.subject));
                pred = b.push(predicate);
            }
        }
    }
    let q = Quintuple { subject: sub, object: obj, aspect: asp, predicate: Some(pred), label };
    (b, q)
}

/// `{S} có {A1} {P1} {O} nhưng {A2} lại {P2} {O}`-style sentences with two
/// quintuples sharing subject and object.
fn double<R: Rng>(rng: &mut R, s: &Slots, aspect2: &str) -> (Builder, Vec<Quintuple>) {
    let mut b = Builder::default();
    let pairwise: Vec<ComparisonLabel> = ComparisonLabel::ALL.into_iter().filter(|l| !is_superlative(*l)).collect();
    let superlative: Vec<ComparisonLabel> = ComparisonLabel::ALL.into_iter().filter(|l| is_superlative(*l)).collect();
    if rng.gen_bool(0.5) {
        let (l1, l2) = (*pairwise.choose(rng).expect("labels"), *pairwise.choose(rng).expect("labels"));
        let sub = b.push(s.subject);
        b.push("có");
        let a1 = b.push(s.aspect);
        let p1 = b.push(pick(rng, predicates(l1)));
        let obj = b.push(s.object);
        b.push("nhưng");
        let a2 = b.push(aspect2);
        b.push("lại");
        let p2 = b.push(pick(rng, predicates(l2)));
        let q = |a, p, label| Quintuple { subject: Some(sub), object: Some(obj), aspect: Some(a), predicate: Some(p), label };
        (b, vec![q(a1, p1, l1), q(a2, p2, l2)])
    } else {
        let (l1, l2) = (*superlative.choose(rng).expect("labels"), *superlative.choose(rng).expect("labels"));
        let sub = b.push(s.subject);
        b.push("có");
        let a1 = b.push(s.aspect);
        let p1 = b.push(pick(rng, predicates(l1)));
        b.push("và");
        let a2 = b.push(aspect2);
        let p2 = b.push(pick(rng, predicates(l2)));
        let q = |a, p, label| Quintuple { subject: Some(sub), object: None, aspect: Some(a), predicate: Some(p), label };
        (b, vec![q(a1, p1, l1), q(a2, p2, l2)])
    }
}

fn neutral<R: Rng>(rng: &mut R, s: &Slots) -> Builder {
    let mut b = Builder::default();
    match rng.gen_range(0..5) {
        0 => {
            b.push(s.subject);
            b.push("có");
            b.push(s.aspect);
            b.push("khá ổn");
        }
        1 => {
            b.push("mình mới mua");
            b.push(s.subject);
            b.push("hôm qua");
        }
        2 => {
            b.push(s.aspect);
            b.push("của");
            b.push(s.subject);
            b.push("dùng cũng được");
        }
        3 => {
            b.push("shop giao hàng nhanh đóng gói cẩn thận");
        }
        _ => {
            b.push("có ai dùng");
            b.push(s.subject);
            b.push("chưa cho mình xin review");
            b.push(s.aspect);
        }
    }
    b
}

/// Generates `config.sentences` sentences with ids `syn<seed>-NNNNN`.
pub fn synthetic_corpus(config: &SyntheticConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sentences = Vec::with_capacity(config.sentences);
    for i in 0..config.sentences {
        let mut products: Vec<&str> = PRODUCTS.choose_multiple(&mut rng, 2).copied().collect();
        let mut aspects: Vec<&str> = ASPECTS.choose_multiple(&mut rng, 2).copied().collect();
        let slots = Slots { subject: products.remove(0), object: products.remove(0), aspect: aspects.remove(0) };
        let (builder, quintuples) = if rng.gen_bool(config.comparative_fraction.clamp(0.0, 1.0)) {
            if rng.gen_bool(config.multi_fraction.clamp(0.0, 1.0)) {
                double(&mut rng, &slots, aspects[0])
            } else {
                let label = *ComparisonLabel::ALL.choose(&mut rng).expect("labels");
                let (b, q) = single(&mut rng, label, &slots);
                (b, vec![q])
            }
        } else {
            (neutral(&mut rng, &slots), Vec::new())
        };
        let id = format!("syn{}-{i:05}", config.seed);
        sentences.push(Sentence::from_words(id, &builder.words, quintuples).expect("templates produce valid spans"));
    }
    Dataset::new(sentences)
        .expect("ids are unique")
        .with_provenance(Provenance { version: Some("synthetic".into()), seed: Some(config.seed) })
}
