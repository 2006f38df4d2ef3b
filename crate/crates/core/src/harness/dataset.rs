use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// One question over one passage with its acceptable answers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answers: Vec<String>,
}

/// Loads an MRQA-style JSONL file (optionally gzipped). Each line is either
/// an MRQA record `{"context", "qas": [{"qid", "question", "answers"}]}`
/// or a flat `{"id", "context", "question", "answers"}` object. MRQA header
/// lines are skipped. Every example must carry at least one answer.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<QaExample>> {
    load(path.as_ref(), true)
}

/// Like [`load_dataset`] but answers may be absent, for decoding unlabeled
/// questions.
pub fn load_unlabeled(path: impl AsRef<Path>) -> Result<Vec<QaExample>> {
    load(path.as_ref(), false)
}

fn load(path: &Path, require_answers: bool) -> Result<Vec<QaExample>> {
    let mut file = BufReader::new(File::open(path)?);
    let gzipped = file.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    let reader: Box<dyn Read> = if gzipped {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_dataset(BufReader::new(reader), path, require_answers)
}

pub fn parse_dataset(reader: impl BufRead, path: &Path, require_answers: bool) -> Result<Vec<QaExample>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| Error::Schema {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        parse_record(&value, require_answers, &mut out).map_err(schema)?;
    }
    Ok(out)
}

fn field<'a>(obj: &'a Value, name: &str) -> std::result::Result<&'a str, String> {
    obj.get(name)
        .ok_or_else(|| format!("missing \"{name}\""))?
        .as_str()
        .ok_or_else(|| format!("\"{name}\" must be a string"))
}

fn answers(obj: &Value, required: bool) -> std::result::Result<Vec<String>, String> {
    let Some(raw) = obj.get("answers") else {
        return if required {
            Err("missing \"answers\"".into())
        } else {
            Ok(Vec::new())
        };
    };
    let list = raw.as_array().ok_or("\"answers\" must be an array")?;
    let answers: Vec<String> = list
        .iter()
        .map(|a| a.as_str().map(str::to_string).ok_or("answers must be strings"))
        .collect::<std::result::Result<_, _>>()?;
    if required && answers.is_empty() {
        return Err("\"answers\" is empty".into());
    }
    Ok(answers)
}

fn parse_record(value: &Value, require_answers: bool, out: &mut Vec<QaExample>) -> std::result::Result<(), String> {
    if !value.is_object() {
        return Err("expected a JSON object".into());
    }
    if value.get("header").is_some() && value.get("context").is_none() {
        return Ok(());
    }
    let context = field(value, "context")?;
    if context.is_empty() {
        return Err("\"context\" is empty".into());
    }
    match value.get("qas") {
        Some(qas) => {
            let qas = qas.as_array().ok_or("\"qas\" must be an array")?;
            for qa in qas {
                let id = field(qa, "qid").or_else(|_| field(qa, "id"))?;
                out.push(QaExample {
                    id: id.to_string(),
                    context: context.to_string(),
                    question: field(qa, "question")?.to_string(),
                    answers: answers(qa, require_answers)?,
                });
            }
        }
        None => out.push(QaExample {
            id: field(value, "id")?.to_string(),
            context: context.to_string(),
            question: field(value, "question")?.to_string(),
            answers: answers(value, require_answers)?,
        }),
    }
    Ok(())
}
