use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde_json::{Map, Value};

use super::{PassCounter, ScoreRequest, Scorer, StepScores};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, TokenSeq, Vocabulary};
use crate::util::{log_sum_exp, Fnv1a};

const NORMALIZATION_TOL: f64 = 1e-12;

/// Key under which a source sequence is stored in a table file.
pub fn source_key(source: &[TokenId]) -> u64 {
    let mut h = Fnv1a::default();
    for &id in source {
        h.write_u32(id);
    }
    h.finish()
}

type ContextKey = (Option<u64>, Vec<TokenId>);

/// A language model given by explicit next-token tables.
///
/// A context is a decoder prefix, optionally tied to one source sequence.
/// Lookup tries the source-specific entry, then the source-agnostic one,
/// then falls back to the default distribution.
#[derive(Debug)]
pub struct TableLm {
    vocab: u64,
    size: usize,
    terminators: Vec<TokenId>,
    contexts: HashMap<ContextKey, Arc<[f64]>>,
    default: Arc<[f64]>,
    passes: PassCounter,
}

fn to_log(probs: &[f64]) -> Arc<[f64]> {
    probs.iter().map(|p| p.ln()).collect()
}

impl TableLm {
    /// A table whose default distribution is `default` (linear probabilities,
    /// one per token id).
    pub fn new(vocab: &Vocabulary, default: &[f64]) -> Result<Self> {
        let lm = TableLm {
            vocab: vocab.fingerprint(),
            size: vocab.len(),
            terminators: vec![vocab.terminator()],
            contexts: HashMap::new(),
            default: Arc::from(Vec::new()),
            passes: PassCounter::default(),
        };
        lm.check_probs(default)?;
        Ok(TableLm {
            default: to_log(default),
            ..lm
        })
    }

    pub fn uniform(vocab: &Vocabulary) -> Self {
        let p = 1.0 / vocab.len() as f64;
        Self::new(vocab, &vec![p; vocab.len()]).expect("uniform distribution is normalized")
    }

    pub fn with_terminators(mut self, terminators: Vec<TokenId>) -> Self {
        self.terminators = terminators;
        self
    }

    pub fn set_terminators(&mut self, terminators: Vec<TokenId>) {
        self.terminators = terminators;
    }

    fn check_probs(&self, probs: &[f64]) -> Result<()> {
        if probs.len() != self.size {
            return Err(Error::InvalidTable(format!(
                "distribution has {} entries, vocabulary has {}",
                probs.len(),
                self.size
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidTable(format!("{p} is not a probability")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidTable(format!("distribution sums to {total}")));
        }
        Ok(())
    }

    /// Stores the next-token distribution after decoder prefix `prefix`.
    /// `source = None` makes the entry apply to every source.
    pub fn insert(&mut self, source: Option<&[TokenId]>, prefix: &[TokenId], probs: &[f64]) -> Result<()> {
        self.check_probs(probs)?;
        self.contexts
            .insert((source.map(source_key), prefix.to_vec()), to_log(probs));
        Ok(())
    }

    /// Like [`TableLm::insert`] but with a sparse `(token, probability)` list;
    /// unlisted tokens get probability zero.
    pub fn insert_sparse(
        &mut self,
        source: Option<&[TokenId]>,
        prefix: &[TokenId],
        entries: &[(TokenId, f64)],
    ) -> Result<()> {
        let probs = self.densify(entries)?;
        self.insert(source, prefix, &probs)
    }

    fn densify(&self, entries: &[(TokenId, f64)]) -> Result<Vec<f64>> {
        let mut probs = vec![0.0; self.size];
        for &(id, p) in entries {
            let slot = probs
                .get_mut(id as usize)
                .ok_or(Error::UnknownToken(id))?;
            *slot += p;
        }
        Ok(probs)
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    /// Log-distribution in effect for `(source, decoder prefix)`.
    pub fn distribution(&self, source: &[TokenId], prefix: &[TokenId]) -> &[f64] {
        let mut key: ContextKey = (Some(source_key(source)), prefix.to_vec());
        if let Some(d) = self.contexts.get(&key) {
            return d;
        }
        key.0 = None;
        self.contexts.get(&key).unwrap_or(&self.default)
    }

    fn term_logprob(&self, dist: &[f64]) -> f64 {
        let picked: Vec<f64> = self.terminators.iter().map(|&t| dist[t as usize]).collect();
        log_sum_exp(&picked)
    }

    /// Parses the table file format: a JSON object mapping context keys
    /// `"<src>#<p1>,<p2>,..."` (with `<src>` either `*` or the 16-digit hex
    /// [`source_key`]) and the key `"default"` to sparse
    /// `{"token_id": probability}` objects.
    pub fn from_json(json: &str, vocab: &Vocabulary) -> Result<Self> {
        let root: Map<String, Value> = serde_json::from_str(json)?;
        let sparse = |v: &Value| -> Result<Vec<(TokenId, f64)>> {
            let obj = v
                .as_object()
                .ok_or_else(|| Error::InvalidTable("distribution must be an object".into()))?;
            obj.iter()
                .map(|(k, p)| {
                    let id = k
                        .parse::<TokenId>()
                        .map_err(|_| Error::InvalidTable(format!("bad token id {k:?}")))?;
                    let p = p
                        .as_f64()
                        .ok_or_else(|| Error::InvalidTable(format!("bad probability for {k}")))?;
                    Ok((id, p))
                })
                .collect()
        };

        let default_entry = root
            .get("default")
            .ok_or_else(|| Error::InvalidTable("missing \"default\" distribution".into()))?;
        let probe = TableLm::uniform(vocab);
        let default = probe.densify(&sparse(default_entry)?)?;
        let mut lm = TableLm::new(vocab, &default)?;
        for (key, value) in &root {
            if key == "default" {
                continue;
            }
            let (src, prefix) = parse_context_key(key)?;
            let probs = lm.densify(&sparse(value)?)?;
            lm.check_probs(&probs)?;
            lm.contexts.insert((src, prefix), to_log(&probs));
        }
        Ok(lm)
    }

    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?, vocab)
    }

    /// Serializes to the table file format. Zero-probability entries are
    /// omitted.
    pub fn to_json(&self) -> Value {
        let sparse = |d: &[f64]| -> Value {
            let obj: Map<String, Value> = d
                .iter()
                .enumerate()
                .filter(|(_, lp)| **lp > f64::NEG_INFINITY)
                .map(|(id, lp)| (id.to_string(), Value::from(lp.exp())))
                .collect();
            Value::Object(obj)
        };
        let mut out: BTreeMap<String, Value> = BTreeMap::new();
        out.insert("default".into(), sparse(&self.default));
        for ((src, prefix), d) in &self.contexts {
            out.insert(format_context_key(*src, prefix), sparse(d));
        }
        Value::Object(out.into_iter().collect())
    }
}

fn format_context_key(src: Option<u64>, prefix: &[TokenId]) -> String {
    let src = match src {
        Some(h) => format!("{h:016x}"),
        None => "*".to_string(),
    };
    let prefix: Vec<String> = prefix.iter().map(|id| id.to_string()).collect();
    format!("{src}#{}", prefix.join(","))
}

fn parse_context_key(key: &str) -> Result<ContextKey> {
    let bad = || Error::InvalidTable(format!("bad context key {key:?}"));
    let (src, prefix) = key.split_once('#').ok_or_else(bad)?;
    let src = match src {
        "*" => None,
        hex => Some(u64::from_str_radix(hex, 16).map_err(|_| bad())?),
    };
    let prefix = if prefix.is_empty() {
        Vec::new()
    } else {
        prefix
            .split(',')
            .map(|p| p.trim().parse::<TokenId>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    Ok((src, prefix))
}

impl Scorer for TableLm {
    fn vocab(&self) -> u64 {
        self.vocab
    }

    fn vocab_size(&self) -> usize {
        self.size
    }

    fn terminators(&self) -> &[TokenId] {
        &self.terminators
    }

    fn teacher_forced_pass(&self, req: &ScoreRequest) -> Result<StepScores> {
        self.passes.tick();
        self.check_vocab(&req.source)?;
        self.check_vocab(&req.forced_prefix)?;
        self.check_vocab(&req.forced_target)?;
        let target = &req.forced_target.ids;
        let mut decoder = req.forced_prefix.ids.clone();
        decoder.reserve(target.len());
        let mut gold = Vec::with_capacity(target.len());
        let mut term = Vec::with_capacity(target.len() + 1);
        for k in 0..=target.len() {
            let dist = self.distribution(&req.source.ids, &decoder);
            term.push(self.term_logprob(dist));
            if let Some(&tok) = target.get(k) {
                let lp = *dist.get(tok as usize).ok_or(Error::UnknownToken(tok))?;
                gold.push(lp);
                decoder.push(tok);
            }
        }
        Ok(StepScores {
            gold_logprob: gold,
            term_logprob: term,
        })
    }

    fn next_token_distribution(&self, source: &TokenSeq, prefix: &TokenSeq) -> Result<Vec<f64>> {
        self.passes.tick();
        self.check_vocab(source)?;
        self.check_vocab(prefix)?;
        Ok(self.distribution(&source.ids, &prefix.ids).to_vec())
    }

    fn passes(&self) -> &PassCounter {
        &self.passes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab4() -> Vocabulary {
        Vocabulary::closed(["</s>", "▁x", "▁y", "▁z"], "</s>", &[]).unwrap()
    }

    #[test]
    fn uniform_distribution_everywhere() {
        let v = vocab4();
        let lm = TableLm::uniform(&v);
        let d = lm.next_token_distribution(&v.encode("q"), &v.encode("x y")).unwrap();
        let p = 0.25f64.ln();
        assert!(d.iter().all(|&x| x == p));
        let total: f64 = d.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hand_built_teacher_forced_scores() {
        let v = vocab4();
        let (term, t1) = (0, 1);
        let mut lm = TableLm::uniform(&v);
        let mut rest = vec![(term, 0.25), (t1, 0.5), (2, 0.25)];
        lm.insert_sparse(None, &[], &rest).unwrap();
        rest = vec![(term, 1.0)];
        lm.insert_sparse(None, &[t1], &rest).unwrap();
        let src = v.encode("q");
        let req = ScoreRequest::new(src.clone(), v.seq(vec![]).unwrap(), v.seq(vec![t1]).unwrap()).unwrap();
        let s = lm.teacher_forced_pass(&req).unwrap();
        assert_eq!(s.gold_logprob, vec![0.5f64.ln()]);
        assert_eq!(s.term_logprob, vec![0.25f64.ln(), 0.0]);

        let d = lm.next_token_distribution(&src, &v.seq(vec![]).unwrap()).unwrap();
        assert_eq!(d[t1 as usize], 0.5f64.ln());
        assert_eq!(d[term as usize], 0.25f64.ln());
        assert_eq!(d[2], 0.25f64.ln());
        assert_eq!(d[3], f64::NEG_INFINITY);
    }

    #[test]
    fn empty_target_still_scores_stopping() {
        let v = vocab4();
        let lm = TableLm::uniform(&v);
        let empty = v.seq(vec![]).unwrap();
        let req = ScoreRequest::new(v.encode("q"), empty.clone(), empty).unwrap();
        let s = lm.teacher_forced_pass(&req).unwrap();
        assert!(s.gold_logprob.is_empty());
        assert_eq!(s.term_logprob.len(), 1);
        assert_eq!(lm.pass_count(), 1);
    }

    #[test]
    fn source_specific_entries_take_precedence() {
        let v = vocab4();
        let mut lm = TableLm::uniform(&v);
        let a = v.encode("x");
        let b = v.encode("y");
        assert_ne!(a, b);
        lm.insert_sparse(Some(&a.ids), &[], &[(1, 1.0)]).unwrap();
        lm.insert_sparse(None, &[], &[(2, 1.0)]).unwrap();
        let empty = v.seq(vec![]).unwrap();
        assert_eq!(lm.next_token_distribution(&a, &empty).unwrap()[1], 0.0);
        assert_eq!(lm.next_token_distribution(&b, &empty).unwrap()[2], 0.0);
        assert_eq!(lm.pass_count(), 2);
        lm.reset_passes();
        assert_eq!(lm.pass_count(), 0);
    }

    #[test]
    fn rejects_unnormalized_tables() {
        let v = vocab4();
        let mut lm = TableLm::uniform(&v);
        assert!(lm.insert_sparse(None, &[], &[(1, 0.5)]).is_err());
        assert!(lm.insert_sparse(None, &[], &[(1, 0.5), (2, 0.5 + 1e-10)]).is_err());
        assert!(lm.insert_sparse(None, &[], &[(9999, 1.0)]).is_err());
    }

    #[test]
    fn combined_terminators_use_log_sum() {
        let v = Vocabulary::new(["</s>", "<extra_id_1>", "x"], "</s>", &["<extra_id_0>", "<extra_id_1>"]).unwrap();
        let mut lm = TableLm::uniform(&v).with_terminators(vec![0, 1]);
        lm.insert_sparse(None, &[], &[(0, 0.1), (1, 0.3), (2, 0.6)]).unwrap();
        let empty = v.seq(vec![]).unwrap();
        let req = ScoreRequest::new(v.encode("q"), empty.clone(), empty).unwrap();
        let s = lm.teacher_forced_pass(&req).unwrap();
        assert!((s.term_logprob[0] - 0.4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn vocabulary_mismatch_is_reported() {
        let v = vocab4();
        let other = Vocabulary::new(["a"], "</s>", &[]).unwrap();
        let lm = TableLm::uniform(&v);
        let r = lm.next_token_distribution(&other.encode("a"), &other.encode(""));
        assert!(matches!(r, Err(Error::VocabMismatch { .. })));
        assert_eq!(lm.pass_count(), 1);
    }

    #[test]
    fn file_format_round_trip() {
        let v = vocab4();
        let mut lm = TableLm::uniform(&v);
        let src = v.encode("x");
        lm.insert_sparse(Some(&src.ids), &[1, 2], &[(0, 0.75), (3, 0.25)]).unwrap();
        lm.insert_sparse(None, &[], &[(1, 1.0)]).unwrap();
        let text = lm.to_json().to_string();
        let back = TableLm::from_json(&text, &v).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.distribution(&src.ids, &[1, 2]), lm.distribution(&src.ids, &[1, 2]));
        assert_eq!(back.distribution(&[], &[]), lm.distribution(&[], &[]));
        assert_eq!(back.distribution(&[], &[3]), lm.distribution(&[], &[3]));
    }

    #[test]
    fn context_key_parsing() {
        assert_eq!(parse_context_key("*#").unwrap(), (None, vec![]));
        assert_eq!(parse_context_key("*#1,2").unwrap(), (None, vec![1, 2]));
        assert_eq!(
            parse_context_key("00000000000000ff#3").unwrap(),
            (Some(255), vec![3])
        );
        assert!(parse_context_key("nohash").is_err());
        assert!(parse_context_key("*#a").is_err());
    }
}
