//! Newline-delimited JSON scorer protocol, over a child process's stdio or
//! HTTP `POST /score`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{clamp_logprob, PassCounter, ScoreRequest, Scorer, StepScores};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, TokenSeq};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireOp {
    TeacherForced,
    NextDist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: u64,
    pub op: WireOp,
    pub source_ids: Vec<TokenId>,
    pub prefix_ids: Vec<TokenId>,
    pub target_ids: Vec<TokenId>,
    /// Terminator set the reply's `term_logprob` should pool over. Servers
    /// that fix their own stopping event may ignore it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub term_ids: Vec<TokenId>,
}

/// Log-probability arrays on the wire; `null` stands for negative infinity.
mod logprobs {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(xs) => s.collect_seq(xs.iter().map(|x| x.is_finite().then_some(*x))),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
        let raw = Option::<Vec<Option<f64>>>::deserialize(d)?;
        Ok(raw.map(|xs| xs.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect()))
    }
}

/// Server reply: either step scores, a full distribution, or an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "logprobs")]
    pub gold_logprob: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "logprobs")]
    pub term_logprob: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "logprobs")]
    pub logits_logprob: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl WireResponse {
    fn failure(id: u64, message: String) -> Self {
        WireResponse {
            id,
            gold_logprob: None,
            term_logprob: None,
            logits_logprob: None,
            error: Some(message),
        }
    }
}

/// Moves one request line to the model and returns its reply line.
pub trait Transport: Send + Sync {
    fn round_trip(&self, line: &str) -> Result<String>;
}

struct ChildIo {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Talks to a child process: one JSON request per stdin line, one reply
/// per stdout line. Requests are serialized.
pub struct StdioTransport {
    child: Mutex<Child>,
    io: Mutex<ChildIo>,
}

impl StdioTransport {
    /// Spawns `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Transport(format!("cannot start {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(StdioTransport {
            child: Mutex::new(child),
            io: Mutex::new(ChildIo { stdin, stdout }),
        })
    }
}

impl Transport for StdioTransport {
    fn round_trip(&self, line: &str) -> Result<String> {
        let mut io = self.io.lock().unwrap_or_else(|e| e.into_inner());
        let transport = |e: std::io::Error| Error::Transport(e.to_string());
        io.stdin.write_all(line.as_bytes()).map_err(transport)?;
        io.stdin.write_all(b"\n").map_err(transport)?;
        io.stdin.flush().map_err(transport)?;
        let mut reply = String::new();
        let n = io.stdout.read_line(&mut reply).map_err(transport)?;
        if n == 0 {
            return Err(Error::Transport("scorer process closed its output".into()));
        }
        Ok(reply)
    }
}

impl Drop for StdioTransport {
    fn drop(&mut self) {
        let mut child = self.child.lock().unwrap_or_else(|e| e.into_inner());
        let _ = child.kill();
        let _ = child.wait();
    }
}

/// `POST <base>/score` with the request object as the body.
pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(url: &str) -> Self {
        let url = url.trim_end_matches('/');
        let url = if url.ends_with("/score") {
            url.to_string()
        } else {
            format!("{url}/score")
        };
        HttpTransport {
            url,
            agent: ureq::Agent::new_with_defaults(),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Transport for HttpTransport {
    fn round_trip(&self, line: &str) -> Result<String> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(line)
            .map_err(|e| Error::Transport(format!("{}: {e}", self.url)))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(format!("{}: {e}", self.url)))
    }
}

/// A scorer backed by an external model speaking the wire protocol.
pub struct RemoteScorer {
    transport: Box<dyn Transport>,
    vocab: u64,
    vocab_size: usize,
    terminators: Vec<TokenId>,
    next_id: AtomicU64,
    passes: PassCounter,
}

impl RemoteScorer {
    pub fn new(transport: Box<dyn Transport>, vocab: u64, vocab_size: usize, terminators: Vec<TokenId>) -> Self {
        RemoteScorer {
            transport,
            vocab,
            vocab_size,
            terminators,
            next_id: AtomicU64::new(0),
            passes: PassCounter::default(),
        }
    }

    fn call(&self, mut req: WireRequest) -> Result<WireResponse> {
        req.id = self.next_id.fetch_add(1, Ordering::Relaxed);
        req.term_ids = self.terminators.clone();
        let line = serde_json::to_string(&req)?;
        let reply = self.transport.round_trip(&line)?;
        let resp: WireResponse = serde_json::from_str(reply.trim())
            .map_err(|e| Error::MalformedReply(format!("{e}: {}", reply.trim())))?;
        if resp.id != req.id {
            return Err(Error::MalformedReply(format!(
                "reply id {} does not match request id {}",
                resp.id, req.id
            )));
        }
        if let Some(msg) = resp.error {
            return Err(Error::MalformedReply(format!("scorer reported: {msg}")));
        }
        Ok(resp)
    }
}

impl Scorer for RemoteScorer {
    fn vocab(&self) -> u64 {
        self.vocab
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn terminators(&self) -> &[TokenId] {
        &self.terminators
    }

    fn teacher_forced_pass(&self, req: &ScoreRequest) -> Result<StepScores> {
        self.passes.tick();
        self.check_vocab(&req.source)?;
        self.check_vocab(&req.forced_prefix)?;
        self.check_vocab(&req.forced_target)?;
        let resp = self.call(WireRequest {
            id: 0,
            op: WireOp::TeacherForced,
            source_ids: req.source.ids.clone(),
            prefix_ids: req.forced_prefix.ids.clone(),
            target_ids: req.forced_target.ids.clone(),
            term_ids: Vec::new(),
        })?;
        match (resp.gold_logprob, resp.term_logprob) {
            (Some(gold), Some(term)) => StepScores {
                gold_logprob: gold,
                term_logprob: term,
            }
            .validated(req.forced_target.len()),
            _ => Err(Error::MalformedReply(
                "teacher_forced reply lacks gold_logprob/term_logprob".into(),
            )),
        }
    }

    fn next_token_distribution(&self, source: &TokenSeq, prefix: &TokenSeq) -> Result<Vec<f64>> {
        self.passes.tick();
        self.check_vocab(source)?;
        self.check_vocab(prefix)?;
        let resp = self.call(WireRequest {
            id: 0,
            op: WireOp::NextDist,
            source_ids: source.ids.clone(),
            prefix_ids: prefix.ids.clone(),
            target_ids: Vec::new(),
            term_ids: Vec::new(),
        })?;
        let dist = resp
            .logits_logprob
            .ok_or_else(|| Error::MalformedReply("next_dist reply lacks logits_logprob".into()))?;
        if dist.len() != self.vocab_size {
            return Err(Error::MalformedReply(format!(
                "distribution has {} entries, vocabulary has {}",
                dist.len(),
                self.vocab_size
            )));
        }
        dist.into_iter().map(clamp_logprob).collect()
    }

    fn passes(&self) -> &PassCounter {
        &self.passes
    }
}

/// Serves one protocol line against a local scorer, producing the reply
/// line. Failures are reported in-band through the `error` field.
pub fn handle_request_line<S: Scorer + ?Sized>(scorer: &S, line: &str) -> String {
    let reply = match serde_json::from_str::<WireRequest>(line.trim()) {
        Ok(req) => serve(scorer, &req).unwrap_or_else(|e| WireResponse::failure(req.id, e.to_string())),
        Err(e) => WireResponse::failure(0, format!("bad request: {e}")),
    };
    serde_json::to_string(&reply).expect("responses serialize")
}

fn serve<S: Scorer + ?Sized>(scorer: &S, req: &WireRequest) -> Result<WireResponse> {
    let seq = |ids: &[TokenId]| TokenSeq::new(ids.to_vec(), scorer.vocab());
    match req.op {
        WireOp::TeacherForced => {
            let scores = scorer.teacher_forced_pass(&ScoreRequest::new(
                seq(&req.source_ids),
                seq(&req.prefix_ids),
                seq(&req.target_ids),
            )?)?;
            Ok(WireResponse {
                id: req.id,
                gold_logprob: Some(scores.gold_logprob),
                term_logprob: Some(scores.term_logprob),
                logits_logprob: None,
                error: None,
            })
        }
        WireOp::NextDist => {
            let dist = scorer.next_token_distribution(&seq(&req.source_ids), &seq(&req.prefix_ids))?;
            Ok(WireResponse {
                id: req.id,
                gold_logprob: None,
                term_logprob: None,
                logits_logprob: Some(dist),
                error: None,
            })
        }
    }
}
