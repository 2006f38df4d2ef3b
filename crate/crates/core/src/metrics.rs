//! Answer quality and decoder-behaviour metrics.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{find_subsequence, Vocabulary};

fn article_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("valid regex"))
}

fn sentinel_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<extra_id_\d+>").expect("valid regex"))
}

/// Answer normalization, applied in this order: lowercase, drop the articles
/// `a`/`an`/`the`, drop ASCII punctuation, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_articles = article_re().replace_all(&lower, " ");
    let no_punct: String = no_articles.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn f1_single(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(gold);
    let pred: Vec<&str> = pred.split_whitespace().collect();
    let gold: Vec<&str> = gold.split_whitespace().collect();
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Bag-of-tokens F1 after normalization, maximized over the gold answers.
pub fn token_f1<S: AsRef<str>>(prediction: &str, golds: &[S]) -> Result<f64> {
    if golds.is_empty() {
        return Err(Error::EmptyGolds);
    }
    Ok(golds
        .iter()
        .map(|g| f1_single(prediction, g.as_ref()))
        .fold(0.0, f64::max))
}

pub fn exact_match<S: AsRef<str>>(prediction: &str, golds: &[S]) -> Result<bool> {
    if golds.is_empty() {
        return Err(Error::EmptyGolds);
    }
    let pred = normalize_answer(prediction);
    Ok(golds.iter().any(|g| normalize_answer(g.as_ref()) == pred))
}

/// Removes `<extra_id_N>` markers and surrounding whitespace from generated
/// text.
pub fn clean_generated(text: &str) -> String {
    sentinel_re().replace_all(text, "").trim().to_string()
}

/// Whether generated text was copied from the passage: after sentinel and
/// whitespace stripping it must contain an alphanumeric character and occur
/// verbatim (case-sensitive) in the passage.
pub fn is_extractive(generated: &str, passage: &str) -> bool {
    let cleaned = clean_generated(generated);
    cleaned.chars().any(char::is_alphanumeric) && passage.contains(cleaned.as_str())
}

/// Whether greedy decoding produced the same answer as exact-extract.
pub fn exactness(greedy_text: &str, exact_text: &str) -> bool {
    greedy_text.trim() == exact_text.trim()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Partition {
    /// Some tokenized gold answer is a contiguous run of passage tokens.
    #[serde(rename = "S_in")]
    In,
    /// No tokenized gold answer can be extracted token-wise.
    #[serde(rename = "S_out")]
    Out,
}

impl Partition {
    pub fn label(self) -> &'static str {
        match self {
            Partition::In => "S_in",
            Partition::Out => "S_out",
        }
    }
}

pub fn partition_example<S: AsRef<str>>(golds: &[S], passage: &str, vocab: &Vocabulary) -> Result<Partition> {
    if golds.is_empty() {
        return Err(Error::EmptyGolds);
    }
    let passage = vocab.encode(passage);
    let inside = golds
        .iter()
        .any(|g| find_subsequence(&vocab.encode(g.as_ref()).ids, &passage.ids).is_some());
    Ok(if inside { Partition::In } else { Partition::Out })
}

/// Metrics of one decoder's answer on one example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub f1: f64,
    pub exact_match: bool,
    pub extractive: bool,
    /// Greedy and exact-extract agree; only defined where both ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exactness_match: Option<bool>,
    pub partition: Partition,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub count: usize,
    /// Fraction of all examples in this partition.
    pub share: f64,
    pub f1: f64,
    pub extractiveness: f64,
}

/// Means over a set of [`ExampleScore`]s, as fractions in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub f1: f64,
    pub exact_match: f64,
    pub extractiveness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exactness: Option<f64>,
    pub s_in: PartitionStats,
    pub s_out: PartitionStats,
}

fn mean(xs: impl Iterator<Item = f64>) -> (usize, f64) {
    let (n, sum) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n, if n == 0 { 0.0 } else { sum / n as f64 })
}

fn as_unit(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn aggregate(scores: &[ExampleScore]) -> Result<Aggregate> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let total = scores.len();
    let part = |p: Partition| {
        let members: Vec<&ExampleScore> = scores.iter().filter(|s| s.partition == p).collect();
        PartitionStats {
            count: members.len(),
            share: members.len() as f64 / total as f64,
            f1: mean(members.iter().map(|s| s.f1)).1,
            extractiveness: mean(members.iter().map(|s| as_unit(s.extractive))).1,
        }
    };
    let (with_exactness, exactness) = mean(scores.iter().filter_map(|s| s.exactness_match).map(as_unit));
    Ok(Aggregate {
        count: total,
        f1: mean(scores.iter().map(|s| s.f1)).1,
        exact_match: mean(scores.iter().map(|s| as_unit(s.exact_match))).1,
        extractiveness: mean(scores.iter().map(|s| as_unit(s.extractive))).1,
        exactness: (with_exactness > 0).then_some(exactness),
        s_in: part(Partition::In),
        s_out: part(Partition::Out),
    })
}
