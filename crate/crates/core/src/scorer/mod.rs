//! Conditional language-model scoring.
//!
//! A [`Scorer`] answers two kinds of query about `P(· | source)`: a
//! teacher-forced pass over a whole forced target, and a single next-token
//! distribution. Every query counts as exactly one pass on the scorer's
//! [`PassCounter`], which is how the decoders' pass budgets are checked.

mod remote;
mod table;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{same_vocab, TokenId, TokenSeq};

pub use remote::{
    handle_request_line, HttpTransport, RemoteScorer, StdioTransport, Transport, WireRequest,
    WireResponse,
};
pub use table::{source_key, TableLm};

/// One teacher-forced query: score `forced_target` after `forced_prefix`,
/// conditioned on `source`.
#[derive(Clone, Debug)]
pub struct ScoreRequest {
    pub source: TokenSeq,
    pub forced_prefix: TokenSeq,
    pub forced_target: TokenSeq,
}

impl ScoreRequest {
    pub fn new(source: TokenSeq, forced_prefix: TokenSeq, forced_target: TokenSeq) -> Result<Self> {
        same_vocab(&source, &forced_prefix)?;
        same_vocab(&source, &forced_target)?;
        Ok(ScoreRequest {
            source,
            forced_prefix,
            forced_target,
        })
    }

    pub fn vocab(&self) -> u64 {
        self.source.vocab
    }
}

/// Per-step log-probabilities from one teacher-forced pass over a target of
/// length `m`.
///
/// `gold_logprob[k]` is `log P(target[k] | prefix + target[..k])` and
/// `term_logprob[k]` is the log-probability of stopping after
/// `prefix + target[..k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepScores {
    pub gold_logprob: Vec<f64>,
    pub term_logprob: Vec<f64>,
}

impl StepScores {
    /// Checks the shape contract for a target of length `m`. Tiny positive
    /// values from a remote model's rounding are clamped to zero.
    pub fn validated(mut self, m: usize) -> Result<Self> {
        if self.gold_logprob.len() != m || self.term_logprob.len() != m + 1 {
            return Err(Error::MalformedReply(format!(
                "expected {} gold and {} terminator scores, got {} and {}",
                m,
                m + 1,
                self.gold_logprob.len(),
                self.term_logprob.len()
            )));
        }
        for v in self.gold_logprob.iter_mut().chain(self.term_logprob.iter_mut()) {
            *v = clamp_logprob(*v)?;
        }
        Ok(self)
    }
}

const POSITIVE_SLACK: f64 = 1e-9;

pub(crate) fn clamp_logprob(v: f64) -> Result<f64> {
    if v.is_nan() || v > POSITIVE_SLACK {
        return Err(Error::MalformedReply(format!("{v} is not a log-probability")));
    }
    Ok(v.min(0.0))
}

/// Monotone count of scorer passes since the last reset.
#[derive(Debug, Default)]
pub struct PassCounter(AtomicU64);

impl PassCounter {
    pub fn tick(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

/// The conditional language model `P(· | source)`.
pub trait Scorer: Send + Sync {
    /// Fingerprint of the vocabulary requests must be encoded under.
    fn vocab(&self) -> u64;

    fn vocab_size(&self) -> usize;

    /// Token ids whose combined probability is the stopping event.
    fn terminators(&self) -> &[TokenId];

    /// Scores a whole forced target in one pass.
    fn teacher_forced_pass(&self, req: &ScoreRequest) -> Result<StepScores>;

    /// Full next-token log-distribution after `prefix`; one pass.
    fn next_token_distribution(&self, source: &TokenSeq, prefix: &TokenSeq) -> Result<Vec<f64>>;

    fn passes(&self) -> &PassCounter;

    fn pass_count(&self) -> u64 {
        self.passes().get()
    }

    fn reset_passes(&self) {
        self.passes().reset()
    }

    fn check_vocab(&self, seq: &TokenSeq) -> Result<()> {
        if seq.vocab != self.vocab() {
            return Err(Error::VocabMismatch {
                expected: self.vocab(),
                found: seq.vocab,
            });
        }
        Ok(())
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn vocab(&self) -> u64 {
        (**self).vocab()
    }
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn terminators(&self) -> &[TokenId] {
        (**self).terminators()
    }
    fn teacher_forced_pass(&self, req: &ScoreRequest) -> Result<StepScores> {
        (**self).teacher_forced_pass(req)
    }
    fn next_token_distribution(&self, source: &TokenSeq, prefix: &TokenSeq) -> Result<Vec<f64>> {
        (**self).next_token_distribution(source, prefix)
    }
    fn passes(&self) -> &PassCounter {
        (**self).passes()
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn vocab(&self) -> u64 {
        (**self).vocab()
    }
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn terminators(&self) -> &[TokenId] {
        (**self).terminators()
    }
    fn teacher_forced_pass(&self, req: &ScoreRequest) -> Result<StepScores> {
        (**self).teacher_forced_pass(req)
    }
    fn next_token_distribution(&self, source: &TokenSeq, prefix: &TokenSeq) -> Result<Vec<f64>> {
        (**self).next_token_distribution(source, prefix)
    }
    fn passes(&self) -> &PassCounter {
        (**self).passes()
    }
}
