//! Prompt templates that turn a (passage, question) pair into encoder input,
//! plus the decoder-side framing: the answer is generated between
//! `<extra_id_0>` and `<extra_id_1>`.

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, TokenSeq, Vocabulary};

pub const OPEN_SENTINEL: &str = "<extra_id_0>";
pub const CLOSE_SENTINEL: &str = "<extra_id_1>";
pub const PASSAGE_SLOT: &str = "{T}";
pub const QUESTION_SLOT: &str = "{Q}";
pub const ANSWER_SLOT: &str = "{a}";

/// The prompt used unless another is requested.
pub const DEFAULT_TEMPLATE: u32 = 2;

const BUILTIN: &str = include_str!("../data/prompts.json");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: u32,
    pub encoder_pattern: String,
    pub target_pattern: String,
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidTemplate { id: self.id, reason };
        for slot in [PASSAGE_SLOT, QUESTION_SLOT, OPEN_SENTINEL] {
            let count = self.encoder_pattern.matches(slot).count();
            if count != 1 {
                return Err(fail(format!("encoder pattern contains {slot} {count} times")));
            }
        }
        let expected = format!("{OPEN_SENTINEL}{ANSWER_SLOT}{CLOSE_SENTINEL}");
        if self.target_pattern != expected {
            return Err(fail(format!("target pattern must be {expected:?}")));
        }
        Ok(())
    }

    /// Substitutes passage and question in one pass, so placeholder-like
    /// text inside either argument is left alone.
    pub fn render_encoder_input(&self, passage: &str, question: &str) -> String {
        let mut out = String::with_capacity(self.encoder_pattern.len() + passage.len() + question.len());
        let mut rest = self.encoder_pattern.as_str();
        loop {
            let next = [(PASSAGE_SLOT, passage), (QUESTION_SLOT, question)]
                .into_iter()
                .filter_map(|(slot, value)| rest.find(slot).map(|at| (at, slot, value)))
                .min_by_key(|&(at, _, _)| at);
            match next {
                Some((at, slot, value)) => {
                    out.push_str(&rest[..at]);
                    out.push_str(value);
                    rest = &rest[at + slot.len()..];
                }
                None => {
                    out.push_str(rest);
                    return out;
                }
            }
        }
    }

    pub fn render_target(&self, answer: &str) -> String {
        self.target_pattern.replacen(ANSWER_SLOT, answer, 1)
    }
}

/// Which event ends a generated answer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatorMode {
    /// The closing sentinel `<extra_id_1>`.
    #[default]
    Sentinel,
    /// The vocabulary's end-of-sequence token.
    Eos,
    /// Either of the above; their probabilities are pooled.
    Both,
}

pub const EOS_MARKER: &str = "<eos>";

/// Forced decoder prefix and terminator surfaces for a template. The
/// end-of-sequence token is reported as [`EOS_MARKER`]; resolve it with
/// [`resolve_terminators`].
pub fn render_target_prefix_and_terminator(tpl: &PromptTemplate, mode: TerminatorMode) -> (String, Vec<String>) {
    let prefix = match tpl.target_pattern.find(ANSWER_SLOT) {
        Some(at) => tpl.target_pattern[..at].to_string(),
        None => OPEN_SENTINEL.to_string(),
    };
    let terms = match mode {
        TerminatorMode::Sentinel => vec![CLOSE_SENTINEL.to_string()],
        TerminatorMode::Eos => vec![EOS_MARKER.to_string()],
        TerminatorMode::Both => vec![CLOSE_SENTINEL.to_string(), EOS_MARKER.to_string()],
    };
    (prefix, terms)
}

/// Maps terminator surfaces to ids, treating [`EOS_MARKER`] as the
/// vocabulary's terminator token.
pub fn resolve_terminators(vocab: &Vocabulary, surfaces: &[String]) -> Result<Vec<TokenId>> {
    surfaces
        .iter()
        .map(|s| {
            if s == EOS_MARKER {
                Ok(vocab.terminator())
            } else {
                vocab
                    .id_of(s)
                    .filter(|&id| vocab.is_special(id))
                    .ok_or_else(|| Error::InvalidVocab(format!("terminator {s:?} is not a special token")))
            }
        })
        .collect()
}

/// Tokenized encoder input and forced decoder prefix for one example.
pub struct RenderedPrompt {
    pub text: String,
    pub source: TokenSeq,
    pub prefix: TokenSeq,
}

pub fn render(vocab: &Vocabulary, tpl: &PromptTemplate, passage: &str, question: &str) -> RenderedPrompt {
    let text = tpl.render_encoder_input(passage, question);
    let source = vocab.encode(&text);
    let (prefix, _) = render_target_prefix_and_terminator(tpl, TerminatorMode::Sentinel);
    let prefix = vocab.encode(&prefix);
    RenderedPrompt { text, source, prefix }
}

fn parse_templates(json: &str) -> Result<Vec<PromptTemplate>> {
    let templates: Vec<PromptTemplate> = serde_json::from_str(json)?;
    for t in &templates {
        t.validate()?;
    }
    Ok(templates)
}

/// The six built-in templates, ids 1 through 6.
pub fn list_templates() -> &'static [PromptTemplate] {
    static TEMPLATES: OnceLock<Vec<PromptTemplate>> = OnceLock::new();
    TEMPLATES.get_or_init(|| parse_templates(BUILTIN).expect("built-in prompts are valid"))
}

pub fn template(id: u32) -> Option<&'static PromptTemplate> {
    list_templates().iter().find(|t| t.id == id)
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<PromptTemplate>> {
    parse_templates(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_templates_with_stable_ids() {
        let ids: Vec<u32> = list_templates().iter().map(|t| t.id).collect();
        assert_eq!(ids, [1, 2, 3, 4, 5, 6]);
        assert!(list_templates().iter().all(|t| t.encoder_pattern.contains(OPEN_SENTINEL)));
        assert!(template(6).unwrap().encoder_pattern.starts_with("Background: "));
        assert!(template(7).is_none());
    }

    #[test]
    fn default_template_renders_block() {
        let t = template(DEFAULT_TEMPLATE).unwrap();
        assert_eq!(
            t.render_encoder_input("Paris is big.", "What is big?"),
            "Text: Paris is big.\nQuestion: What is big?\nAnswer:<extra_id_0>."
        );
    }

    #[test]
    fn bare_template() {
        assert_eq!(
            template(3).unwrap().render_encoder_input("Paris is big.", "What is big?"),
            "Paris is big.\nWhat is big?\n<extra_id_0>."
        );
    }

    #[test]
    fn empty_question_is_legal() {
        assert_eq!(
            template(2).unwrap().render_encoder_input("P", ""),
            "Text: P\nQuestion: \nAnswer:<extra_id_0>."
        );
    }

    #[test]
    fn placeholders_inside_arguments_are_not_expanded() {
        let t = template(2).unwrap();
        assert_eq!(
            t.render_encoder_input("uses {Q} literally", "and {T}"),
            "Text: uses {Q} literally\nQuestion: and {T}\nAnswer:<extra_id_0>."
        );
    }

    #[test]
    fn prefix_and_terminators() {
        let t = template(2).unwrap();
        assert_eq!(
            render_target_prefix_and_terminator(t, TerminatorMode::default()),
            ("<extra_id_0>".to_string(), vec!["<extra_id_1>".to_string()])
        );
        assert_eq!(
            render_target_prefix_and_terminator(t, TerminatorMode::Eos).1,
            vec![EOS_MARKER.to_string()]
        );
        assert_eq!(render_target_prefix_and_terminator(t, TerminatorMode::Both).1.len(), 2);
        assert_eq!(t.render_target("IRA"), "<extra_id_0>IRA<extra_id_1>");
    }

    #[test]
    fn terminator_resolution() {
        let v = Vocabulary::new(["x"], "</s>", &[OPEN_SENTINEL, CLOSE_SENTINEL]).unwrap();
        let ids = resolve_terminators(&v, &[CLOSE_SENTINEL.into(), EOS_MARKER.into()]).unwrap();
        assert_eq!(ids, vec![v.id_of(CLOSE_SENTINEL).unwrap(), v.terminator()]);
        assert!(resolve_terminators(&v, &["x".into()]).is_err());
    }

    #[test]
    fn invalid_templates_are_rejected() {
        let bad = PromptTemplate {
            id: 9,
            encoder_pattern: "{T} {T} {Q} <extra_id_0>".into(),
            target_pattern: "<extra_id_0>{a}<extra_id_1>".into(),
        };
        assert!(bad.validate().is_err());
        let bad = PromptTemplate {
            id: 9,
            encoder_pattern: "{T} {Q} <extra_id_0>".into(),
            target_pattern: "{a}".into(),
        };
        assert!(bad.validate().is_err());
    }
}
