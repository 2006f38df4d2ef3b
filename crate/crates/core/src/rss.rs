//! Recurring-span-selection pretraining data.
//!
//! A passage yields an example when some word span occurs at least twice:
//! one occurrence is replaced by `<extra_id_0>` and the target asks the
//! model to restore it. Spans are whole words, matched case-sensitively,
//! and may not begin or end with a stopword.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompting::{CLOSE_SENTINEL, OPEN_SENTINEL};
use crate::util::Fnv1a;

const BUILTIN_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

pub fn default_stopwords() -> HashSet<String> {
    parse_stopwords(BUILTIN_STOPWORDS)
}

/// One word per line; blank lines and `#` comments are skipped. Words are
/// lowercased.
pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug)]
pub struct RssConfig {
    pub stopwords: HashSet<String>,
    pub min_span_words: usize,
    pub max_span_words: usize,
    pub rng_seed: u64,
}

impl Default for RssConfig {
    fn default() -> Self {
        RssConfig {
            stopwords: default_stopwords(),
            min_span_words: 1,
            max_span_words: 10,
            rng_seed: 0,
        }
    }
}

impl RssConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_span_words == 0 || self.min_span_words > self.max_span_words {
            return Err(Error::InvalidConfig(format!(
                "span bounds must satisfy 1 <= min <= max, got {}..={}",
                self.min_span_words, self.max_span_words
            )));
        }
        Ok(())
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(&word.to_lowercase())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RssExample {
    pub masked_passage: String,
    pub target: String,
    pub span_surface: String,
    pub occurrence_count: usize,
}

/// A span occurring at least twice, with its non-overlapping occurrences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecurringSpan {
    pub surface: String,
    pub words: usize,
    /// Byte ranges of the occurrences, in passage order.
    pub occurrences: Vec<(usize, usize)>,
    /// Index of the first word of each occurrence.
    pub word_starts: Vec<usize>,
}

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+").expect("valid regex"))
}

/// Byte ranges of the words in `text`.
pub fn words(text: &str) -> Vec<(usize, usize)> {
    word_re().find_iter(text).map(|m| (m.start(), m.end())).collect()
}

/// Maximal recurring word spans of `passage`.
///
/// A span of `min..=max` words qualifies when its first and last words are
/// not stopwords and it occurs at two or more non-overlapping word
/// positions (chosen left to right). A qualifying span is dropped when all of
/// its occurrences lie inside the occurrences of one longer qualifying span.
pub fn find_recurring_spans(passage: &str, cfg: &RssConfig) -> Vec<RecurringSpan> {
    let ws = words(passage);
    let stop: Vec<bool> = ws.iter().map(|&(s, e)| cfg.is_stopword(&passage[s..e])).collect();

    let mut groups: BTreeMap<(usize, &str), Vec<usize>> = BTreeMap::new();
    for len in cfg.min_span_words..=cfg.max_span_words.min(ws.len()) {
        for start in 0..=ws.len() - len {
            let last = start + len - 1;
            if stop[start] || stop[last] {
                continue;
            }
            let surface = &passage[ws[start].0..ws[last].1];
            groups.entry((len, surface)).or_default().push(start);
        }
    }

    let mut candidates: Vec<RecurringSpan> = groups
        .into_iter()
        .filter_map(|((len, surface), starts)| {
            let mut picked: Vec<usize> = Vec::new();
            for s in starts {
                if picked.last().is_none_or(|&p| s >= p + len) {
                    picked.push(s);
                }
            }
            (picked.len() >= 2).then(|| RecurringSpan {
                surface: surface.to_string(),
                words: len,
                occurrences: picked.iter().map(|&s| (ws[s].0, ws[s + len - 1].1)).collect(),
                word_starts: picked,
            })
        })
        .collect();

    let covered = |short: &RecurringSpan, long: &RecurringSpan| {
        short.word_starts.iter().all(|&p| {
            long.word_starts
                .iter()
                .any(|&q| q <= p && p + short.words <= q + long.words)
        })
    };
    let keep: Vec<bool> = candidates
        .iter()
        .map(|s| {
            !candidates
                .iter()
                .any(|l| l.words > s.words && covered(s, l))
        })
        .collect();
    let mut i = 0;
    candidates.retain(|_| {
        i += 1;
        keep[i - 1]
    });
    candidates.sort_by(|a, b| {
        a.word_starts[0]
            .cmp(&b.word_starts[0])
            .then(b.words.cmp(&a.words))
    });
    candidates
}

fn passage_rng(passage: &str, seed: u64) -> ChaCha8Rng {
    let mut h = Fnv1a::default();
    h.write_u64(seed).write(passage.as_bytes());
    ChaCha8Rng::seed_from_u64(h.finish())
}

/// Masks one occurrence of one recurring span. The choice depends only on
/// the passage and `cfg.rng_seed`.
pub fn make_example(passage: &str, cfg: &RssConfig) -> Option<RssExample> {
    // A passage already carrying sentinel text cannot hold a single mask.
    if passage.contains("<extra_id_") {
        return None;
    }
    let candidates = find_recurring_spans(passage, cfg);
    if candidates.is_empty() {
        return None;
    }
    let mut rng = passage_rng(passage, cfg.rng_seed);
    let span = &candidates[rng.random_range(0..candidates.len())];
    let (start, end) = span.occurrences[rng.random_range(0..span.occurrences.len())];
    let masked_passage = format!("{}{OPEN_SENTINEL}{}", &passage[..start], &passage[end..]);
    Some(RssExample {
        masked_passage,
        target: format!("{OPEN_SENTINEL}{}{CLOSE_SENTINEL}", span.surface),
        span_surface: span.surface.clone(),
        occurrence_count: span.occurrences.len(),
    })
}

/// Lazily turns a passage stream into at most `limit` examples, one per
/// productive passage, in input order.
pub fn generate_corpus<'a, I>(passages: I, cfg: &'a RssConfig, limit: usize) -> impl Iterator<Item = Result<RssExample>> + 'a
where
    I: IntoIterator<Item = Result<String>>,
    I::IntoIter: 'a,
{
    passages
        .into_iter()
        .filter_map(move |p| match p {
            Ok(text) => make_example(&text, cfg).map(Ok),
            Err(e) => Some(Err(e)),
        })
        .take(limit)
}

/// Parallel variant of [`generate_corpus`] over in-memory passages. Output
/// is identical to the sequential version.
pub fn generate_batch(passages: &[String], cfg: &RssConfig, limit: usize) -> Vec<RssExample> {
    passages
        .par_iter()
        .map(|p| make_example(p, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .take(limit)
        .collect()
}

#[derive(Deserialize)]
struct WikiLine {
    text: String,
}

/// Reads passages from a file: one JSON object with a `text` field per line
/// for `.jsonl`/`.json`, otherwise one passage per line. Blank lines are
/// skipped.
pub fn read_passages(path: impl AsRef<Path>) -> Result<impl Iterator<Item = Result<String>>> {
    let path = path.as_ref().to_path_buf();
    let json = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("json")
    );
    let reader = BufReader::new(File::open(&path)?);
    Ok(reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| {
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::Io(e))),
            };
            if line.trim().is_empty() {
                return None;
            }
            if !json {
                return Some(Ok(line));
            }
            Some(
                serde_json::from_str::<WikiLine>(&line)
                    .map(|w| w.text)
                    .map_err(|e| Error::Schema {
                        path: path.clone(),
                        line: i + 1,
                        message: e.to_string(),
                    }),
            )
        }))
}
