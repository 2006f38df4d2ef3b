//! Span decoders over a [`Scorer`].
//!
//! * [`exact_extract`] finds the most probable passage span with one
//!   teacher-forced pass per passage suffix. Row `i` of the
//!   [`SpanScoreTable`] holds, for the suffix starting at token `i`, the
//!   per-step gold log-probabilities and stopping log-probabilities; the
//!   cumulative sums give every span's score `L(i, j) + e(i, j)`.
//! * [`naive_exact`] scores every candidate span with its own pass. It is the
//!   quadratic-pass reference the dynamic program is checked against.
//! * [`greedy_decode`] generates freely by argmax and then checks whether the
//!   output happens to be a passage span.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::{ScoreRequest, Scorer};
use crate::tokenizer::{find_subsequence, TokenSeq, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Greedy,
    ExactExtract,
    Naive,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::ExactExtract => "exact_extract",
            Algorithm::Naive => "naive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    /// Longest span (in tokens) considered by the extractive decoders.
    pub max_span_len: Option<usize>,
    pub max_greedy_steps: usize,
    /// Admit the zero-length span as a candidate.
    pub allow_empty_span: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            max_span_len: None,
            max_greedy_steps: 64,
            allow_empty_span: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_greedy_steps == 0 {
            return Err(Error::InvalidConfig("max_greedy_steps must be at least 1".into()));
        }
        if self.max_span_len == Some(0) && !self.allow_empty_span {
            return Err(Error::InvalidConfig(
                "max_span_len of 0 leaves no candidates unless empty spans are allowed".into(),
            ));
        }
        Ok(())
    }

    fn span_cap(&self, n: usize) -> usize {
        self.max_span_len.map_or(n, |m| m.min(n))
    }

    fn min_len(&self) -> usize {
        usize::from(!self.allow_empty_span)
    }
}

/// Everything a decoder conditions on for one example.
#[derive(Clone, Copy, Debug)]
pub struct DecodeInput<'a> {
    pub vocab: &'a Vocabulary,
    /// Passage tokens `T`.
    pub passage: &'a TokenSeq,
    /// Encoder input (rendered prompt).
    pub prompt: &'a TokenSeq,
    /// Decoder tokens forced before the answer, e.g. the opening sentinel.
    pub prefix: &'a TokenSeq,
}

/// Token span `[start, start + length)` of the passage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    /// Passage token span. Always set by the extractive decoders; set for
    /// greedy only when its output tokens occur contiguously in the passage.
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub span: Option<Span>,
    #[serde(with = "crate::serde_logprob")]
    pub span_logprob: f64,
    pub text: String,
    pub passes_used: u64,
    pub algorithm: Algorithm,
    /// Output is a token span of the passage.
    pub extractive: bool,
    /// Greedy stopped at `max_greedy_steps` without emitting a terminator.
    #[serde(default)]
    pub truncated: bool,
    /// Generated token ids (greedy only), excluding the terminator.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub output_ids: Vec<u32>,
}

/// Per-suffix teacher-forced scores and their running sums.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanScoreTable {
    n: usize,
    /// `ell[i][k]`: log-probability of passage token `i + k` given the
    /// suffix prefix `T[i..i+k]`; `k < n - i`.
    ell: Vec<Vec<f64>>,
    /// `eterm[i][k]`: log-probability of stopping after `T[i..i+k]`;
    /// `k <= n - i`.
    eterm: Vec<Vec<f64>>,
    /// `cum[i][j]`: log-probability of generating `T[i..i+j]`; `j <= n - i`.
    cum: Vec<Vec<f64>>,
}

impl SpanScoreTable {
    fn from_rows(n: usize, rows: Vec<(Vec<f64>, Vec<f64>)>) -> Self {
        let mut ell = Vec::with_capacity(n);
        let mut eterm = Vec::with_capacity(n);
        let mut cum = Vec::with_capacity(n);
        for (gold, term) in rows {
            let mut acc = Vec::with_capacity(gold.len() + 1);
            acc.push(0.0);
            for (j, &lp) in gold.iter().enumerate() {
                acc.push(acc[j] + lp);
            }
            ell.push(gold);
            eterm.push(term);
            cum.push(acc);
        }
        SpanScoreTable { n, ell, eterm, cum }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ell(&self, i: usize, k: usize) -> f64 {
        self.ell[i][k]
    }

    pub fn eterm(&self, i: usize, k: usize) -> f64 {
        self.eterm[i][k]
    }

    pub fn cumulative(&self, i: usize, j: usize) -> f64 {
        self.cum[i][j]
    }

    /// Width of row `i`: the longest span starting at `i` that was scored.
    pub fn row_len(&self, i: usize) -> usize {
        self.ell[i].len()
    }

    /// `L(i, j) + e(i, j)`.
    pub fn span_logprob(&self, i: usize, j: usize) -> f64 {
        self.cum[i][j] + self.eterm[i][j]
    }

    /// Best span under the shared tie-break over rows `i` and lengths
    /// `min_len..=row_len(i)`.
    pub fn argmax(&self, min_len: usize) -> Option<(Span, f64)> {
        let mut best: Option<(Span, f64)> = None;
        for i in 0..self.n {
            for j in min_len..=self.row_len(i) {
                let score = self.span_logprob(i, j);
                best = pick(best, Span { start: i, length: j }, score);
            }
        }
        best
    }
}

/// Highest score wins; on ties the earlier candidate (smaller start, then
/// smaller length, given row-major enumeration) is kept.
fn pick(best: Option<(Span, f64)>, span: Span, score: f64) -> Option<(Span, f64)> {
    match best {
        Some((_, b)) if score <= b => best,
        _ => Some((span, score)),
    }
}

fn check_inputs(input: &DecodeInput<'_>, scorer: &(impl Scorer + ?Sized)) -> Result<()> {
    input.vocab.check(input.passage)?;
    input.vocab.check(input.prompt)?;
    input.vocab.check(input.prefix)?;
    scorer.check_vocab(input.passage)
}

fn build_rows(
    input: &DecodeInput<'_>,
    scorer: &(impl Scorer + ?Sized),
    cap: usize,
) -> Result<SpanScoreTable> {
    check_inputs(input, scorer)?;
    let n = input.passage.len();
    if n == 0 {
        return Err(Error::EmptyPassage);
    }
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let end = i + cap.min(n - i);
        let req = ScoreRequest::new(
            input.prompt.clone(),
            input.prefix.clone(),
            input.passage.slice(i, end),
        )?;
        let scores = scorer.teacher_forced_pass(&req)?.validated(end - i)?;
        rows.push((scores.gold_logprob, scores.term_logprob));
    }
    Ok(SpanScoreTable::from_rows(n, rows))
}

/// Fills the full table with one teacher-forced pass per passage suffix.
pub fn build_span_table(input: &DecodeInput<'_>, scorer: &(impl Scorer + ?Sized)) -> Result<SpanScoreTable> {
    build_rows(input, scorer, usize::MAX)
}

fn extract_text(input: &DecodeInput<'_>, span: Span) -> Result<String> {
    input
        .vocab
        .decode_ids(&input.passage.ids[span.start..span.start + span.length])
}

/// Most probable passage span, using exactly `n` scorer passes.
pub fn exact_extract(
    input: &DecodeInput<'_>,
    scorer: &(impl Scorer + ?Sized),
    cfg: &DecodeConfig,
) -> Result<DecodeResult> {
    cfg.validate()?;
    let before = scorer.pass_count();
    let table = build_rows(input, scorer, cfg.span_cap(input.passage.len()))?;
    let (span, score) = table
        .argmax(cfg.min_len())
        .expect("a non-empty passage always has a candidate");
    Ok(DecodeResult {
        span: Some(span),
        span_logprob: score,
        text: extract_text(input, span)?,
        passes_used: scorer.pass_count() - before,
        algorithm: Algorithm::ExactExtract,
        extractive: true,
        truncated: false,
        output_ids: Vec::new(),
    })
}

/// Every candidate span scored by its own pass, in row-major order.
pub fn naive_span_scores(
    input: &DecodeInput<'_>,
    scorer: &(impl Scorer + ?Sized),
    cfg: &DecodeConfig,
) -> Result<Vec<(Span, f64)>> {
    cfg.validate()?;
    check_inputs(input, scorer)?;
    let n = input.passage.len();
    if n == 0 {
        return Err(Error::EmptyPassage);
    }
    let cap = cfg.span_cap(n);
    let mut out = Vec::new();
    for i in 0..n {
        for j in cfg.min_len()..=cap.min(n - i) {
            let req = ScoreRequest::new(
                input.prompt.clone(),
                input.prefix.clone(),
                input.passage.slice(i, i + j),
            )?;
            let scores = scorer.teacher_forced_pass(&req)?.validated(j)?;
            let mut total = 0.0;
            for lp in &scores.gold_logprob {
                total += lp;
            }
            out.push((Span { start: i, length: j }, total + scores.term_logprob[j]));
        }
    }
    Ok(out)
}

/// Reference decoder: one pass per candidate span, `n(n+1)/2` uncapped.
pub fn naive_exact(
    input: &DecodeInput<'_>,
    scorer: &(impl Scorer + ?Sized),
    cfg: &DecodeConfig,
) -> Result<DecodeResult> {
    let before = scorer.pass_count();
    let scored = naive_span_scores(input, scorer, cfg)?;
    let (span, score) = scored
        .into_iter()
        .fold(None, |best, (span, score)| pick(best, span, score))
        .expect("a non-empty passage always has a candidate");
    Ok(DecodeResult {
        span: Some(span),
        span_logprob: score,
        text: extract_text(input, span)?,
        passes_used: scorer.pass_count() - before,
        algorithm: Algorithm::Naive,
        extractive: true,
        truncated: false,
        output_ids: Vec::new(),
    })
}

/// Argmax decoding until a terminator or `max_greedy_steps`.
///
/// The reported score is the sum of the chosen tokens' log-probabilities plus
/// the pooled terminator log-probability at the stopping step; a truncated
/// run has no stopping step and reports the token sum alone.
pub fn greedy_decode(
    input: &DecodeInput<'_>,
    scorer: &(impl Scorer + ?Sized),
    cfg: &DecodeConfig,
) -> Result<DecodeResult> {
    cfg.validate()?;
    check_inputs(input, scorer)?;
    let before = scorer.pass_count();
    let terminators = scorer.terminators();
    let mut decoder = input.prefix.clone();
    let mut output = Vec::new();
    let mut logprob = 0.0;
    let mut truncated = true;
    for _ in 0..cfg.max_greedy_steps {
        let dist = scorer.next_token_distribution(input.prompt, &decoder)?;
        // first maximum wins, so ties go to the smallest id
        let (best, _) = dist
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        let best = best as u32;
        if terminators.contains(&best) {
            let pooled: Vec<f64> = terminators.iter().map(|&t| dist[t as usize]).collect();
            logprob += crate::util::log_sum_exp(&pooled);
            truncated = false;
            break;
        }
        logprob += dist[best as usize];
        output.push(best);
        decoder.ids.push(best);
    }

    let raw = input.vocab.decode_ids(&output)?;
    let text = crate::metrics::clean_generated(&raw);
    let sentinels = input.vocab.sentinels();
    let answer = trim_ids(&output, |id| sentinels.contains(&id));
    let span = find_span(answer, &input.passage.ids);
    Ok(DecodeResult {
        span,
        span_logprob: logprob,
        text,
        passes_used: scorer.pass_count() - before,
        algorithm: Algorithm::Greedy,
        extractive: span.is_some(),
        truncated,
        output_ids: output,
    })
}

fn trim_ids(ids: &[u32], strip: impl Fn(u32) -> bool) -> &[u32] {
    let start = ids.iter().position(|&id| !strip(id)).unwrap_or(ids.len());
    let end = ids.iter().rposition(|&id| !strip(id)).map_or(start, |e| e + 1);
    &ids[start..end]
}

/// Locates generated tokens in the passage. An empty output never counts as
/// a span.
pub fn find_span(output: &[u32], passage: &[u32]) -> Option<Span> {
    if output.is_empty() {
        return None;
    }
    find_subsequence(output, passage).map(|start| Span {
        start,
        length: output.len(),
    })
}

pub fn decode(
    algorithm: Algorithm,
    input: &DecodeInput<'_>,
    scorer: &(impl Scorer + ?Sized),
    cfg: &DecodeConfig,
) -> Result<DecodeResult> {
    match algorithm {
        Algorithm::Greedy => greedy_decode(input, scorer, cfg),
        Algorithm::ExactExtract => exact_extract(input, scorer, cfg),
        Algorithm::Naive => naive_exact(input, scorer, cfg),
    }
}
