use spandecode_core::prompting::{render_target_prefix_and_terminator, resolve_terminators};
use spandecode_core::scorer::{HttpTransport, StdioTransport, Transport};
use spandecode_core::{PromptTemplate, RemoteScorer, Scorer, TableLm, TerminatorMode, TokenId, Vocabulary};

use crate::Failure;

pub enum ScorerSpec {
    Table(String),
    Remote(String),
    Stdio(String),
}

pub fn parse_spec(spec: &str) -> Result<ScorerSpec, Failure> {
    if let Some(path) = spec.strip_prefix("table:") {
        Ok(ScorerSpec::Table(path.to_string()))
    } else if let Some(url) = spec.strip_prefix("remote:") {
        Ok(ScorerSpec::Remote(url.to_string()))
    } else if let Some(cmd) = spec.strip_prefix("stdio:") {
        Ok(ScorerSpec::Stdio(cmd.to_string()))
    } else if spec.starts_with("http://") || spec.starts_with("https://") {
        Ok(ScorerSpec::Remote(spec.to_string()))
    } else {
        Err(Failure::Usage(format!(
            "unrecognized scorer {spec:?}; expected table:FILE, remote:URL or stdio:CMD"
        )))
    }
}

pub fn terminator_ids(vocab: &Vocabulary, template: &PromptTemplate, mode: TerminatorMode) -> Result<Vec<TokenId>, Failure> {
    let (_, surfaces) = render_target_prefix_and_terminator(template, mode);
    Ok(resolve_terminators(vocab, &surfaces)?)
}

pub fn open(spec: &str, vocab: &Vocabulary, terminators: Vec<TokenId>) -> Result<Box<dyn Scorer>, Failure> {
    let remote = |t: Box<dyn Transport>| -> Box<dyn Scorer> {
        Box::new(RemoteScorer::new(t, vocab.fingerprint(), vocab.len(), terminators.clone()))
    };
    Ok(match parse_spec(spec)? {
        ScorerSpec::Table(path) => Box::new(TableLm::load(path, vocab)?.with_terminators(terminators)),
        ScorerSpec::Remote(url) => remote(Box::new(HttpTransport::new(&url))),
        ScorerSpec::Stdio(cmd) => remote(Box::new(StdioTransport::spawn(&cmd)?)),
    })
}
