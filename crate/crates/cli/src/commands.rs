use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use spandecode_core::decoding::{decode, DecodeConfig, DecodeInput, DecodeResult};
use spandecode_core::harness::{
    load_dataset, load_unlabeled, render_report, run_eval, select_hyperparameters, subsample, ConfigScoreTable,
    EvalOptions, EvalReport, QaExample,
};
use spandecode_core::metrics::partition_example;
use spandecode_core::prompting::{self, load_templates, render, PromptTemplate};
use spandecode_core::rss::{self, generate_batch, RssConfig};
use spandecode_core::scorer::handle_request_line;
use spandecode_core::{Error, Partition, Scorer, TableLm, Vocabulary};

use crate::scorer;
use crate::{Cli, Command, Failure, Global, Outcome, PromptArgs, SpanArgs};

pub fn run(cli: Cli) -> Outcome {
    let g = &cli.global;
    match cli.command {
        Command::Decode(a) => {
            let vocab = vocab(g)?;
            let template = template(&a.prompt)?;
            let terms = scorer::terminator_ids(&vocab, &template, a.prompt.terminator.into())?;
            let lm = scorer::open(scorer_spec(g)?, &vocab, terms)?;
            let data = load_unlabeled(&a.input)?;
            let cfg = decode_config(&a.span);
            let pool = pool(g.jobs)?;
            let algorithm = a.algo.into();
            let results: Vec<_> = pool.install(|| {
                data.par_iter()
                    .map(|ex| decode_one(ex, &vocab, &template, &*lm, algorithm, &cfg))
                    .collect()
            });
            let mut out = writer(a.output.as_deref())?;
            let mut first_error = None;
            let mut written = 0;
            for (ex, r) in data.iter().zip(results) {
                match r {
                    Ok(result) => {
                        write_line(&mut out, &DecodedLine { id: &ex.id, result })?;
                        written += 1;
                    }
                    // a broken scorer will fail every example; stop at once
                    Err(e) if e.is_transport() => return Err(e.into()),
                    Err(e) => {
                        eprintln!("spandecode: skipping {}: {e}", ex.id);
                        first_error.get_or_insert(e);
                    }
                }
            }
            out.flush()?;
            match first_error {
                Some(e) if written == 0 => Err(e.into()),
                _ => Ok(()),
            }
        }
        Command::Eval(a) => {
            let vocab = vocab(g)?;
            let template = template(&a.prompt)?;
            let terms = scorer::terminator_ids(&vocab, &template, a.prompt.terminator.into())?;
            let lm = scorer::open(scorer_spec(g)?, &vocab, terms)?;
            let data = load_dataset(&a.input)?;
            let opts = EvalOptions {
                template,
                decode: decode_config(&a.span),
                run_naive: a.naive,
                jobs: g.jobs,
            };
            let report = run_eval(&data, &vocab, &*lm, &opts)?;
            for f in &report.failures {
                eprintln!("spandecode: skipped {}: {}", f.id, f.error);
            }
            if let Some(path) = &a.output {
                let mut w = BufWriter::new(File::create(path)?);
                serde_json::to_writer_pretty(&mut w, &report)?;
                w.flush()?;
            }
            print!("{}", render_report(&report));
            Ok(())
        }
        Command::Subsample(a) => {
            let data = load_dataset(&a.input)?;
            let validation = a.validation.as_ref().map(load_dataset).transpose()?;
            let splits = subsample(&data, &a.sizes, a.samples, g.seed, validation.as_deref())?;
            let mut out = writer(a.output.as_deref())?;
            for s in &splits {
                write_line(&mut out, s)?;
            }
            out.flush()?;
            Ok(())
        }
        Command::Partition(a) => {
            let vocab = vocab(g)?;
            let data = load_dataset(&a.input)?;
            let mut out = writer(a.output.as_deref())?;
            let mut inside = 0usize;
            for ex in &data {
                let partition = partition_example(&ex.answers, &ex.context, &vocab)?;
                inside += usize::from(partition == Partition::In);
                write_line(&mut out, &PartitionLine { id: &ex.id, partition })?;
            }
            out.flush()?;
            let total = data.len().max(1) as f64;
            eprintln!(
                "S_in {inside} ({:.1}%), S_out {} ({:.1}%)",
                100.0 * inside as f64 / total,
                data.len() - inside,
                100.0 * (data.len() - inside) as f64 / total
            );
            Ok(())
        }
        Command::SelectHp(a) => {
            let raw: Value = serde_json::from_reader(io::BufReader::new(File::open(&a.input)?))?;
            let table: ConfigScoreTable = if raw.is_array() {
                ConfigScoreTable {
                    scores: serde_json::from_value(raw)?,
                }
            } else {
                serde_json::from_value(raw)?
            };
            let choice = select_hyperparameters(&table)?;
            println!("{}", serde_json::to_string_pretty(&choice)?);
            Ok(())
        }
        Command::RssGen(a) => {
            let mut cfg = RssConfig {
                min_span_words: a.min_span,
                max_span_words: a.max_span,
                rng_seed: g.seed,
                ..Default::default()
            };
            if let Some(path) = &a.stopwords {
                cfg.stopwords = rss::parse_stopwords(&std::fs::read_to_string(path)?);
            }
            cfg.validate()?;
            let passages: Vec<String> = rss::read_passages(&a.input)?.collect::<Result<_, _>>()?;
            let limit = a.limit.unwrap_or(usize::MAX);
            let examples = pool(g.jobs)?.install(|| generate_batch(&passages, &cfg, limit));
            let mut out = writer(a.output.as_deref())?;
            for ex in &examples {
                write_line(&mut out, ex)?;
            }
            out.flush()?;
            eprintln!("{} examples from {} passages", examples.len(), passages.len());
            Ok(())
        }
        Command::Report(a) => {
            let report: EvalReport = serde_json::from_reader(io::BufReader::new(File::open(&a.input)?))?;
            print!("{}", render_report(&report));
            Ok(())
        }
        Command::Templates => {
            for t in prompting::list_templates() {
                println!("{}\t{:?}", t.id, t.encoder_pattern);
            }
            Ok(())
        }
        Command::Serve(a) => {
            let vocab = vocab(g)?;
            let template = prompting::template(prompting::DEFAULT_TEMPLATE).expect("default template exists");
            let terms = scorer::terminator_ids(&vocab, template, a.terminator.into())?;
            let lm = TableLm::load(&a.table, &vocab)?.with_terminators(terms);
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for line in io::stdin().lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                writeln!(out, "{}", handle_request_line(&lm, &line))?;
                out.flush()?;
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct DecodedLine<'a> {
    id: &'a str,
    #[serde(flatten)]
    result: DecodeResult,
}

#[derive(Serialize)]
struct PartitionLine<'a> {
    id: &'a str,
    partition: Partition,
}

fn decode_one(
    ex: &QaExample,
    vocab: &Vocabulary,
    template: &PromptTemplate,
    lm: &dyn Scorer,
    algorithm: spandecode_core::Algorithm,
    cfg: &DecodeConfig,
) -> spandecode_core::Result<DecodeResult> {
    let prompt = render(vocab, template, &ex.context, &ex.question);
    let passage = vocab.encode(&ex.context);
    let input = DecodeInput {
        vocab,
        passage: &passage,
        prompt: &prompt.source,
        prefix: &prompt.prefix,
    };
    decode(algorithm, &input, &lm, cfg)
}

fn vocab(g: &Global) -> Result<Vocabulary, Failure> {
    let path = g
        .vocab
        .as_ref()
        .ok_or_else(|| Failure::Usage("--vocab is required for this command".into()))?;
    Ok(Vocabulary::load(path)?)
}

fn scorer_spec(g: &Global) -> Result<&str, Failure> {
    g.scorer
        .as_deref()
        .ok_or_else(|| Failure::Usage("--scorer (or SPANDECODE_SCORER_URL) is required for this command".into()))
}

fn template(a: &PromptArgs) -> Result<PromptTemplate, Failure> {
    let found = match &a.prompt_file {
        Some(path) => load_templates(path)?.into_iter().find(|t| t.id == a.prompt_id),
        None => prompting::template(a.prompt_id).cloned(),
    };
    found.ok_or_else(|| Failure::Usage(format!("no prompt template with id {}", a.prompt_id)))
}

fn decode_config(a: &SpanArgs) -> DecodeConfig {
    DecodeConfig {
        max_span_len: a.max_span_len,
        max_greedy_steps: a.max_greedy_steps,
        allow_empty_span: a.allow_empty,
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Core(Error::InvalidConfig(e.to_string())))
}

fn writer(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(PathBuf::from(p))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_line(out: &mut dyn Write, value: &impl Serialize) -> Result<(), Failure> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}
