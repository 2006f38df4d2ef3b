mod commands;
mod scorer;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spandecode_core::{Algorithm, TerminatorMode};

/// Extractive span decoding for sequence-to-sequence QA models.
#[derive(Parser, Debug)]
#[command(name = "spandecode", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Vocabulary file (JSON).
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
    /// Scorer: `table:FILE`, `remote:URL` or `stdio:CMD`. A bare URL means
    /// `remote:`.
    #[arg(long, global = true, env = "SPANDECODE_SCORER_URL")]
    scorer: Option<String>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decode answers for every example of a dataset.
    Decode(DecodeArgs),
    /// Decode with greedy and exact-extract and score against the golds.
    Eval(EvalArgs),
    /// Draw few-shot training sets.
    Subsample(SubsampleArgs),
    /// Classify examples by whether a gold answer is a passage token span.
    Partition(PartitionArgs),
    /// Choose a configuration from a validation score table.
    SelectHp(SelectHpArgs),
    /// Generate recurring-span-selection examples from raw passages.
    RssGen(RssGenArgs),
    /// Render a saved evaluation report as a table.
    Report(ReportArgs),
    /// List the built-in prompt templates.
    Templates,
    /// Answer scorer protocol requests on stdin from a table file.
    #[command(hide = true)]
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AlgoArg {
    Greedy,
    Exact,
    Naive,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Greedy => Algorithm::Greedy,
            AlgoArg::Exact => Algorithm::ExactExtract,
            AlgoArg::Naive => Algorithm::Naive,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum TerminatorArg {
    #[default]
    Sentinel,
    Eos,
    Both,
}

impl From<TerminatorArg> for TerminatorMode {
    fn from(t: TerminatorArg) -> Self {
        match t {
            TerminatorArg::Sentinel => TerminatorMode::Sentinel,
            TerminatorArg::Eos => TerminatorMode::Eos,
            TerminatorArg::Both => TerminatorMode::Both,
        }
    }
}

#[derive(Args, Debug)]
struct PromptArgs {
    /// Built-in template id.
    #[arg(long, default_value_t = spandecode_core::prompting::DEFAULT_TEMPLATE)]
    prompt_id: u32,
    /// JSON file of templates to pick `--prompt-id` from.
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    /// What ends a generated answer.
    #[arg(long, value_enum, default_value_t)]
    terminator: TerminatorArg,
}

#[derive(Args, Debug)]
struct SpanArgs {
    /// Longest answer span in tokens.
    #[arg(long)]
    max_span_len: Option<usize>,
    /// Allow the empty span as an answer.
    #[arg(long)]
    allow_empty: bool,
    #[arg(long, default_value_t = 64)]
    max_greedy_steps: usize,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long, value_enum, default_value = "exact")]
    algo: AlgoArg,
    #[command(flatten)]
    prompt: PromptArgs,
    #[command(flatten)]
    span: SpanArgs,
    /// Dataset (JSONL, optionally gzipped). Answers are not required.
    #[arg(long)]
    input: PathBuf,
    /// JSONL output; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    prompt: PromptArgs,
    #[command(flatten)]
    span: SpanArgs,
    /// Also run the per-span reference decoder.
    #[arg(long)]
    naive: bool,
    #[arg(long)]
    input: PathBuf,
    /// Where to write the JSON report.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SubsampleArgs {
    #[arg(long)]
    input: PathBuf,
    /// Held-out examples whose passages must not be drawn.
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Comma-separated training-set sizes.
    #[arg(long, value_delimiter = ',', default_values_t = spandecode_core::harness::FEW_SHOT_SIZES)]
    sizes: Vec<usize>,
    /// Samples per size.
    #[arg(long, default_value_t = 5)]
    samples: usize,
    /// JSONL output of splits; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelectHpArgs {
    /// JSON score table indexed `[config][size][sample]`, either bare or as
    /// `{"scores": ...}`.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args, Debug)]
struct RssGenArgs {
    /// Passages: `.jsonl` with a `text` field, or plain text lines.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Maximum number of examples.
    #[arg(long)]
    limit: Option<usize>,
    /// Stopword list, one word per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    min_span: usize,
    #[arg(long, default_value_t = 10)]
    max_span: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// JSON report written by `eval`.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// Table file served by this process.
    #[arg(long)]
    table: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    terminator: TerminatorArg,
}

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(spandecode_core::Error),
}

impl From<spandecode_core::Error> for Failure {
    fn from(e: spandecode_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) if e.is_transport() => 3,
            Failure::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Core(e) => e.fmt(f),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("spandecode: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
