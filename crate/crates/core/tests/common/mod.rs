//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spandecode_core::{DecodeInput, TableLm, TokenSeq, Vocabulary};

/// A closed vocabulary `</s>, ▁w1, ..., ▁w{size-1}` with the terminator at id 0.
pub fn word_vocab(size: usize) -> Vocabulary {
    assert!(size >= 2);
    let mut pieces = vec!["</s>".to_string()];
    pieces.extend((1..size).map(|i| format!("▁w{i}")));
    Vocabulary::closed(pieces, "</s>", &[]).unwrap()
}

pub struct Case {
    pub vocab: Vocabulary,
    pub passage: TokenSeq,
    pub prompt: TokenSeq,
    pub prefix: TokenSeq,
}

impl Case {
    pub fn new(vocab: Vocabulary, passage: Vec<u32>) -> Self {
        Case {
            passage: vocab.seq(passage).unwrap(),
            prompt: vocab.seq(vec![1]).unwrap(),
            prefix: vocab.seq(vec![]).unwrap(),
            vocab,
        }
    }

    pub fn input(&self) -> DecodeInput<'_> {
        DecodeInput {
            vocab: &self.vocab,
            passage: &self.passage,
            prompt: &self.prompt,
            prefix: &self.prefix,
        }
    }
}

/// How the random next-token distributions are shaped.
#[derive(Clone, Copy, Debug)]
pub enum Shape {
    /// Continuous random weights.
    Smooth,
    /// Small integer weights, so equal scores are common.
    Coarse,
    /// Random weights with some zeros, so some spans score `-inf`.
    Sparse,
}

pub fn random_distribution(rng: &mut impl Rng, size: usize, shape: Shape) -> Vec<f64> {
    let mut w: Vec<f64> = (0..size)
        .map(|_| match shape {
            Shape::Smooth => rng.random_range(0.01..1.0),
            Shape::Coarse => rng.random_range(1..=3) as f64,
            Shape::Sparse => {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(0.01..1.0)
                }
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[0] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// A random passage over a random closed vocabulary, with a table covering
/// every decoder context the extractive decoders can visit.
pub fn fuzz_case(seed: u64, max_vocab: usize, max_len: usize) -> (Case, TableLm) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = rng.random_range(3..=max_vocab);
    let n = rng.random_range(1..=max_len);
    let shape = match rng.random_range(0..3) {
        0 => Shape::Smooth,
        1 => Shape::Coarse,
        _ => Shape::Sparse,
    };
    let passage: Vec<u32> = (0..n).map(|_| rng.random_range(1..size as u32)).collect();
    let case = Case::new(word_vocab(size), passage.clone());
    let default = random_distribution(&mut rng, size, shape);
    let mut lm = TableLm::new(&case.vocab, &default).unwrap();
    for i in 0..n {
        for k in 0..=n - i {
            let probs = random_distribution(&mut rng, size, shape);
            lm.insert(None, &passage[i..i + k], &probs).unwrap();
        }
    }
    (case, lm)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a == b) || (a - b).abs() <= tol
}

const LEXICON: &[&str] = &[
    "Ada", "Lovelace", "engine", "Babbage", "London", "notes", "machine", "poem", "Byron", "numbers",
    "the", "of", "and", "a", "in", "was", "her", "to", "with", "for",
];

/// A word-soup passage drawn from a tiny lexicon, so spans recur often.
pub fn synthetic_passage(rng: &mut impl Rng) -> String {
    let n = rng.random_range(5..40);
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            out.push_str(if rng.random_bool(0.1) { ", " } else { " " });
        }
        out.push_str(LEXICON[rng.random_range(0..LEXICON.len())]);
    }
    out.push('.');
    out
}

pub fn synthetic_corpus(seed: u64, count: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| synthetic_passage(&mut rng)).collect()
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Non-overlapping, word-aligned occurrences of `span` in `text`, scanning
/// left to right.
pub fn count_word_aligned(text: &str, span: &str) -> usize {
    let mut count = 0;
    let mut from = 0;
    while let Some(rel) = text[from..].find(span) {
        let at = from + rel;
        let end = at + span.len();
        let left_ok = text[..at].chars().next_back().is_none_or(|c| !is_word_char(c));
        let right_ok = text[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if left_ok && right_ok {
            count += 1;
            from = end;
        } else {
            from = at + span.chars().next().map_or(1, char::len_utf8);
        }
    }
    count
}
