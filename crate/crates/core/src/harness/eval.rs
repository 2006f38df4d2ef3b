use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::QaExample;
use crate::decoding::{exact_extract, Algorithm, greedy_decode, naive_exact, DecodeConfig, DecodeInput, DecodeResult};
use crate::error::{Error, Result};
use crate::metrics::{self, Aggregate, ExampleScore, Partition};
use crate::prompting::{self, PromptTemplate};
use crate::scorer::Scorer;
use crate::tokenizer::Vocabulary;

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub template: PromptTemplate,
    pub decode: DecodeConfig,
    /// Also run the per-span reference decoder (slow).
    pub run_naive: bool,
    /// Examples evaluated concurrently; 0 lets the thread pool decide.
    pub jobs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            template: prompting::template(prompting::DEFAULT_TEMPLATE)
                .expect("default template exists")
                .clone(),
            decode: DecodeConfig::default(),
            run_naive: false,
            jobs: 0,
        }
    }
}

/// One decoder's answer to one example and how it scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmOutcome {
    pub result: DecodeResult,
    pub score: ExampleScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub partition: Partition,
    pub greedy: AlgorithmOutcome,
    pub exact_extract: AlgorithmOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naive: Option<AlgorithmOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedExample {
    pub id: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub processed: usize,
    pub skipped: usize,
    pub template_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub greedy: Option<Aggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_extract: Option<Aggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naive: Option<Aggregate>,
    pub failures: Vec<SkippedExample>,
    pub examples: Vec<ExampleRecord>,
}

fn outcome(result: DecodeResult, ex: &QaExample, partition: Partition, exactness: Option<bool>) -> Result<AlgorithmOutcome> {
    let score = ExampleScore {
        f1: metrics::token_f1(&result.text, &ex.answers)?,
        exact_match: metrics::exact_match(&result.text, &ex.answers)?,
        // extractive decoders return passage spans by construction
        extractive: match result.algorithm {
            Algorithm::Greedy => metrics::is_extractive(&result.text, &ex.context),
            _ => result.extractive,
        },
        exactness_match: exactness,
        partition,
    };
    Ok(AlgorithmOutcome { result, score })
}

fn evaluate_one(
    ex: &QaExample,
    vocab: &Vocabulary,
    scorer: &(impl Scorer + ?Sized),
    opts: &EvalOptions,
) -> Result<ExampleRecord> {
    let prompt = prompting::render(vocab, &opts.template, &ex.context, &ex.question);
    let passage = vocab.encode(&ex.context);
    let input = DecodeInput {
        vocab,
        passage: &passage,
        prompt: &prompt.source,
        prefix: &prompt.prefix,
    };
    let partition = metrics::partition_example(&ex.answers, &ex.context, vocab)?;
    let greedy = greedy_decode(&input, scorer, &opts.decode)?;
    let exact = exact_extract(&input, scorer, &opts.decode)?;
    let agree = metrics::exactness(&greedy.text, &exact.text);
    let naive = if opts.run_naive {
        Some(outcome(naive_exact(&input, scorer, &opts.decode)?, ex, partition, None)?)
    } else {
        None
    };
    Ok(ExampleRecord {
        id: ex.id.clone(),
        partition,
        greedy: outcome(greedy, ex, partition, Some(agree))?,
        exact_extract: outcome(exact, ex, partition, Some(agree))?,
        naive,
    })
}

/// Decodes every example with greedy and exact-extract (and optionally the
/// naive reference), scores the answers and aggregates.
///
/// An example whose decoding fails is recorded in `failures` and skipped.
/// If every example fails, the first error is returned instead.
pub fn run_eval(
    dataset: &[QaExample],
    vocab: &Vocabulary,
    scorer: &(impl Scorer + ?Sized),
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    opts.decode.validate()?;
    opts.template.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let results: Vec<Result<ExampleRecord>> =
        pool.install(|| dataset.par_iter().map(|ex| evaluate_one(ex, vocab, scorer, opts)).collect());

    let mut examples = Vec::with_capacity(dataset.len());
    let mut failures = Vec::new();
    let mut first_error = None;
    for (ex, r) in dataset.iter().zip(results) {
        match r {
            Ok(rec) => examples.push(rec),
            Err(e) => {
                failures.push(SkippedExample {
                    id: ex.id.clone(),
                    error: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    if examples.is_empty() {
        return Err(first_error.expect("every example failed"));
    }

    let collect = |pick: fn(&ExampleRecord) -> Option<&AlgorithmOutcome>| -> Option<Aggregate> {
        let scores: Vec<ExampleScore> = examples.iter().filter_map(pick).map(|o| o.score.clone()).collect();
        metrics::aggregate(&scores).ok()
    };
    Ok(EvalReport {
        processed: examples.len(),
        skipped: failures.len(),
        template_id: opts.template.id,
        greedy: collect(|r| Some(&r.greedy)),
        exact_extract: collect(|r| Some(&r.exact_extract)),
        naive: collect(|r| r.naive.as_ref()),
        failures,
        examples,
    })
}
