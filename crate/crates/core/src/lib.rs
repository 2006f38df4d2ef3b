//! Exact and greedy span decoding for extractive question answering over
//! conditional language models, with the metrics and data tooling used to
//! compare the two.
//!
//! The central piece is [`decoding::exact_extract`], which returns the most
//! probable passage span under a [`scorer::Scorer`] using one teacher-forced
//! pass per passage suffix.

pub mod decoding;
pub mod error;
pub mod metrics;
pub mod harness;
pub mod prompting;
pub mod rss;
pub mod scorer;
pub mod tokenizer;
mod util;

pub use decoding::{
    build_span_table, exact_extract, greedy_decode, naive_exact, Algorithm, DecodeConfig, DecodeInput,
    DecodeResult, Span, SpanScoreTable,
};
pub use error::{Error, Result};
pub use metrics::{Aggregate, ExampleScore, Partition};
pub use prompting::{PromptTemplate, TerminatorMode};
pub use scorer::{RemoteScorer, ScoreRequest, Scorer, StepScores, TableLm};
pub use tokenizer::{TokenId, TokenSeq, Vocabulary};
pub use util::{fnv1a, log_sum_exp};

/// Log-probabilities in JSON: negative infinity is written as `null`.
pub(crate) mod serde_logprob {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}
