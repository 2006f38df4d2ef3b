//! Fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spandecode_core::{DecodeInput, TableLm, TokenSeq, Vocabulary};

/// A passage of `n` tokens over a closed word vocabulary, with a random
/// table covering every context the extractive decoders visit.
pub struct Workload {
    pub vocab: Vocabulary,
    pub passage: TokenSeq,
    pub prompt: TokenSeq,
    pub prefix: TokenSeq,
    pub lm: TableLm,
}

impl Workload {
    pub fn new(n: usize, vocab_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pieces = vec!["</s>".to_string()];
        pieces.extend((1..vocab_size).map(|i| format!("▁w{i}")));
        let vocab = Vocabulary::closed(pieces, "</s>", &[]).expect("valid vocabulary");
        let ids: Vec<u32> = (0..n).map(|_| rng.random_range(1..vocab_size as u32)).collect();
        let mut lm = TableLm::uniform(&vocab);
        let mut dist = || {
            let w: Vec<f64> = (0..vocab_size).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| x / total).collect::<Vec<_>>()
        };
        for i in 0..n {
            for k in 0..=n - i {
                lm.insert(None, &ids[i..i + k], &dist()).expect("normalized");
            }
        }
        Workload {
            passage: vocab.seq(ids).expect("ids in range"),
            prompt: vocab.seq(vec![1]).expect("ids in range"),
            prefix: vocab.seq(vec![]).expect("ids in range"),
            vocab,
            lm,
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
