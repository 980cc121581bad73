//! Sparse hashed n-gram features for the native linear models.

use serde::{Deserialize, Serialize};

use crate::types::{ElementKind, Quadruple, Sentence, TokenSpan};

/// Which feature groups a featurizer emits. Three profiles give the stage-2
/// ensemble members genuinely different views of the same words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureProfile {
    /// Word identities and word bigrams only.
    Words,
    /// Character 3-5 grams plus the current word.
    Chars,
    /// Everything.
    Full,
}

impl FeatureProfile {
    fn words(self) -> bool {
        matches!(self, FeatureProfile::Words | FeatureProfile::Full)
    }

    fn chars(self) -> bool {
        matches!(self, FeatureProfile::Chars | FeatureProfile::Full)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// log2 of the hashing dimension.
    pub hash_bits: u8,
    pub profile: FeatureProfile,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { hash_bits: 18, profile: FeatureProfile::Full }
    }
}

impl FeatureConfig {
    pub fn dim(&self) -> usize {
        1usize << self.hash_bits
    }
}

/// Sorted, deduplicated sparse feature vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut out = FeatureVector::default();
        for (i, v) in pairs {
            match out.indices.last() {
                Some(&last) if last == i => *out.values.last_mut().expect("paired") += v,
                _ => {
                    out.indices.push(i);
                    out.values.push(v);
                }
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(parts: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for (n, part) in parts.iter().enumerate() {
        if n > 0 {
            h ^= 0xff;
            h = h.wrapping_mul(FNV_PRIME);
        }
        for b in part.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

struct Builder {
    mask: u64,
    pairs: Vec<(u32, f64)>,
}

impl Builder {
    fn new(config: &FeatureConfig) -> Self {
        Builder { mask: (config.dim() - 1) as u64, pairs: Vec::new() }
    }

    fn add(&mut self, parts: &[&str]) {
        self.pairs.push(((fnv1a(parts) & self.mask) as u32, 1.0));
    }

    fn char_ngrams(&mut self, namespace: &str, word: &str) {
        let padded: Vec<char> = std::iter::once('<').chain(word.chars()).chain(std::iter::once('>')).collect();
        let mut buf = String::new();
        for n in 3..=5 {
            for window in padded.windows(n) {
                buf.clear();
                buf.extend(window);
                self.add(&[namespace, &buf]);
            }
        }
    }

    fn finish(self) -> FeatureVector {
        FeatureVector::new(self.pairs)
    }
}

const BOS: &str = "<s>";
const EOS: &str = "</s>";

/// Turns sentences, tokens and quadruples into hashed feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Featurizer {
    pub config: FeatureConfig,
}

impl Featurizer {
    pub fn new(config: FeatureConfig) -> Self {
        Featurizer { config }
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    fn lower_words(sentence: &Sentence) -> Vec<String> {
        sentence.words().map(str::to_lowercase).collect()
    }

    /// Word unigrams and bigrams plus character 3-5 grams of every word.
    pub fn sentence(&self, sentence: &Sentence) -> FeatureVector {
        let words = Self::lower_words(sentence);
        let profile = self.config.profile;
        let mut b = Builder::new(&self.config);
        b.add(&["bias"]);
        for (i, w) in words.iter().enumerate() {
            b.add(&["u", w]);
            if profile.words() {
                let prev = if i == 0 { BOS } else { words[i - 1].as_str() };
                b.add(&["bi", prev, w]);
            }
            if profile.chars() {
                b.char_ngrams("c", w);
            }
        }
        if profile.words() {
            b.add(&["bi", words.last().map_or(BOS, String::as_str), EOS]);
        }
        b.finish()
    }

    /// One vector per token from a ±2 word window.
    pub fn tokens(&self, sentence: &Sentence) -> Vec<FeatureVector> {
        let words = Self::lower_words(sentence);
        let raw: Vec<&str> = sentence.words().collect();
        let profile = self.config.profile;
        let at = |i: isize| -> &str {
            if i < 0 {
                BOS
            } else {
                words.get(i as usize).map_or(EOS, String::as_str)
            }
        };
        (0..words.len() as isize)
            .map(|i| {
                let mut b = Builder::new(&self.config);
                b.add(&["bias"]);
                b.add(&["w0", at(i)]);
                b.add(&["shape", shape(raw[i as usize])]);
                if profile.words() {
                    for (name, off) in [("w-2", -2), ("w-1", -1), ("w+1", 1), ("w+2", 2)] {
                        b.add(&[name, at(i + off)]);
                    }
                    b.add(&["b-1", at(i - 1), at(i)]);
                    b.add(&["b+1", at(i), at(i + 1)]);
                    b.add(&["shape-1", if i == 0 { BOS } else { shape(raw[i as usize - 1]) }]);
                }
                if profile.chars() {
                    b.char_ngrams("c0", at(i));
                    if i > 0 {
                        b.char_ngrams("c-1", at(i - 1));
                    }
                    if (i as usize) + 1 < words.len() {
                        b.char_ngrams("c+1", at(i + 1));
                    }
                }
                b.finish()
            })
            .collect()
    }

    /// Slot contents, neighbouring words, and the order, distance and
    /// intervening words for every pair of present slots.
    pub fn quadruple(&self, sentence: &Sentence, quad: &Quadruple) -> FeatureVector {
        let words = Self::lower_words(sentence);
        let mut b = Builder::new(&self.config);
        b.add(&["bias"]);
        for kind in ElementKind::ALL {
            let k = kind.tag_suffix();
            let Some(span) = quad.get(kind) else {
                b.add(&["absent", k]);
                continue;
            };
            let phrase = words[span.tokens()].join(" ");
            b.add(&["phrase", k, &phrase]);
            for w in &words[span.tokens()] {
                b.add(&["w", k, w]);
                if kind == ElementKind::Predicate && self.config.profile.chars() {
                    b.char_ngrams("pc", w);
                }
            }
            let left = if span.start == 0 { BOS } else { words[span.start - 1].as_str() };
            let right = words.get(span.end + 1).map_or(EOS, String::as_str);
            b.add(&["l", k, left]);
            b.add(&["r", k, right]);
        }
        let present: Vec<(ElementKind, TokenSpan)> = quad.elements().collect();
        for (i, &(ka, a)) in present.iter().enumerate() {
            for &(kb, bspan) in &present[i + 1..] {
                let pair = format!("{}{}", ka.tag_suffix(), kb.tag_suffix());
                let (first, second, order) = if a.start <= bspan.start { (a, bspan, "<") } else { (bspan, a, ">") };
                let gap = second.start.saturating_sub(first.end + 1);
                b.add(&["ord", &pair, order]);
                b.add(&["dist", &pair, order, distance_bucket(gap)]);
                if gap > 0 && gap <= 12 {
                    for w in &words[first.end + 1..second.start] {
                        b.add(&["btw", &pair, w]);
                    }
                }
            }
        }
        b.finish()
    }
}

fn shape(word: &str) -> &'static str {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) if c.is_ascii_digit() || word.chars().all(|c| c.is_ascii_digit()) => "digit",
        Some(c) if c.is_uppercase() => {
            if word.chars().any(|c| c.is_ascii_digit()) {
                "upper-digit"
            } else {
                "upper"
            }
        }
        Some(_) if word.chars().any(|c| c.is_uppercase()) => "mixed",
        Some(_) => "lower",
        None => "empty",
    }
}

fn distance_bucket(gap: usize) -> &'static str {
    match gap {
        0 => "0",
        1 => "1",
        2 => "2",
        3..=4 => "3-4",
        5..=8 => "5-8",
        _ => "9+",
    }
}
