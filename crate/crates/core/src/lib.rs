//! Comparative opinion mining for Vietnamese product reviews.
//!
//! A comparative sentence is annotated with quintuples of subject, object,
//! aspect, predicate and comparison label. This crate covers the whole
//! workflow around extracting them:
//!
//! - [`ingest`]: normalization, canonical JSONL import/export, lint, statistics
//! - [`augment`]: element dictionaries and label-targeted synthetic data
//! - [`backends`]: the three classifier capabilities, native linear
//!   baselines, and a client for external model processes
//! - [`ensemble`]: weighted logit combination and k-fold bootstrap training
//! - [`pipeline`]: the three-stage extractor and experiment presets
//! - [`eval`]: exact-match quintuple scoring
//!
//! ```
//! use comom::{Dataset, Sentence, Quintuple, TokenSpan, ComparisonLabel};
//! use comom::eval::{e_t5_macro, Averaging};
//!
//! let q = Quintuple {
//!     subject: Some(TokenSpan::single(0)),
//!     object: Some(TokenSpan::single(3)),
//!     aspect: None,
//!     predicate: Some(TokenSpan::new(1, 2)),
//!     label: ComparisonLabel::ComPos,
//! };
//! let gold = Dataset::new(vec![Sentence::new("1", "A tốt hơn B", vec![q])?])?;
//! let report = e_t5_macro(&gold, &gold, Averaging::SkipAbsent)?;
//! assert_eq!(report.macro_f1, 1.0);
//! # Ok::<(), comom::Error>(())
//! ```

pub mod augment;
pub mod backends;
pub mod ensemble;
mod error;
pub mod eval;
pub mod ingest;
pub mod pipeline;
pub mod synthetic;
mod types;

pub use error::{Error, RecordError, Result};
pub use types::*;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/backends.md")]
    mod backends {}
    #[doc = include_str!("../../../book/src/ensembles.md")]
    mod ensembles {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
}
