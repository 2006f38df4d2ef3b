//! Dataset ingestion, few-shot subsampling, evaluation runs and
//! hyperparameter selection.

mod dataset;
mod eval;
mod fewshot;
mod hparams;
mod report;

pub use dataset::{load_dataset, load_unlabeled, parse_dataset, QaExample};
pub use eval::{run_eval, AlgorithmOutcome, EvalOptions, EvalReport, ExampleRecord, SkippedExample};
pub use fewshot::{check_leakage, subsample, FewShotSplit, FEW_SHOT_SIZES};
pub use hparams::{select_hyperparameters, ConfigScoreTable, HpSelection};
pub use report::render_report;
