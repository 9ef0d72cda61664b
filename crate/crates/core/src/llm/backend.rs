//! Backend contract and the offline backends (surrogate, oracle, replay).

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::ledger::LedgerRecord;
use super::prompt::{format_significant, parse_prompt_solutions};

/// One request handed to a backend. `occurrence` counts offspring slots that
/// used the same prompt earlier in the run, so replay can tell identical
/// prompts apart; `attempt` is the retry index within a slot.
#[derive(Debug, Clone, Copy)]
pub struct LlmCall<'a> {
    pub prompt: &'a str,
    pub prompt_hash: &'a str,
    pub occurrence: u32,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend refused the prompt: {0}")]
    Refused(String),
    #[error("no recorded response for prompt {prompt_hash} (occurrence {occurrence}, attempt {attempt})")]
    ReplayMiss {
        prompt_hash: String,
        occurrence: u32,
        attempt: u32,
    },
}

impl BackendError {
    /// Fatal errors abort the run instead of counting as a failed attempt.
    pub fn is_fatal(&self) -> bool {
        matches!(self, BackendError::ReplayMiss { .. })
    }
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, call: &LlmCall<'_>) -> Result<Completion, BackendError>;

    /// Descriptor written to run manifests and ledger records.
    fn identity(&self) -> String;

    /// Calls that reached a live service (zero for offline backends).
    fn live_calls(&self) -> u64 {
        0
    }
}

/// Deterministic stand-in: blends the two best solutions listed in the prompt.
#[derive(Debug, Clone)]
pub struct SurrogateBackend {
    seed: u64,
}

impl SurrogateBackend {
    pub const OUTPUT_DIGITS: usize = 12;

    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Blend weight for `prompt`, in [0.4, 0.6].
    pub fn alpha(&self, prompt: &str) -> f64 {
        let digest = Sha256::digest(prompt.as_bytes());
        let word = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ word);
        0.4 + 0.2 * rng.random::<f64>()
    }

    pub fn respond(&self, prompt: &str) -> Result<String, BackendError> {
        let mut members =
            parse_prompt_solutions(prompt).map_err(|e| BackendError::Refused(e.to_string()))?;
        let key = |s: &super::prompt::PromptSolution| (s.cv, s.objs.iter().sum::<f64>());
        members.sort_by(|a, b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        });
        let (best, second) = (&members[0], &members[1]);
        if best.decs.len() != second.decs.len() {
            return Err(BackendError::Refused("solution lines differ in dimension".into()));
        }
        let alpha = self.alpha(prompt);
        let child: Vec<String> = best
            .decs
            .iter()
            .zip(&second.decs)
            .map(|(b, s)| format_significant(alpha * b + (1.0 - alpha) * s, Self::OUTPUT_DIGITS))
            .collect();
        let block = format!("<start>{}<end>", child.join(", "));
        Ok(match batch_size(prompt) {
            Some(k) => vec![block; k].join("\n"),
            None => block,
        })
    }
}

/// Number of solutions a batch prompt asks for.
fn batch_size(prompt: &str) -> Option<usize> {
    let rest = prompt.split("generate ").nth(1)?;
    let (count, tail) = rest.split_once(' ')?;
    if !tail.starts_with("completely new solutions") {
        return None;
    }
    count.parse().ok()
}

impl LlmBackend for SurrogateBackend {
    fn complete(&self, call: &LlmCall<'_>) -> Result<Completion, BackendError> {
        self.respond(call.prompt).map(Completion::text)
    }

    fn identity(&self) -> String {
        format!("surrogate:{}", self.seed)
    }
}

/// Always answers with the same vector, written at full round-trip precision.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    vector: Vec<f64>,
}

impl OracleBackend {
    pub fn new(vector: Vec<f64>) -> Self {
        Self { vector }
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn response(&self) -> String {
        let parts: Vec<String> = self.vector.iter().map(f64::to_string).collect();
        format!("<start>{}<end>", parts.join(", "))
    }
}

impl LlmBackend for OracleBackend {
    fn complete(&self, _call: &LlmCall<'_>) -> Result<Completion, BackendError> {
        Ok(Completion::text(self.response()))
    }

    fn identity(&self) -> String {
        "oracle".to_string()
    }
}

type ReplayKey = (String, u32, u32);

/// Answers from a recorded ledger. With a fallback backend attached it acts
/// as a record-mode cache: misses go to the fallback.
pub struct ReplayBackend {
    entries: HashMap<ReplayKey, Result<Completion, String>>,
    fallback: Option<Box<dyn LlmBackend>>,
    label: String,
}

impl ReplayBackend {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a LedgerRecord>, label: impl Into<String>) -> Self {
        let entries = records
            .into_iter()
            .map(|r| {
                let key = (r.prompt_hash.clone(), r.occurrence, r.attempt);
                let value = match &r.response {
                    Some(text) => Ok(Completion {
                        text: text.clone(),
                        prompt_tokens: r.prompt_tokens,
                        completion_tokens: r.completion_tokens,
                    }),
                    None => Err(r.error.clone().unwrap_or_else(|| "recorded failure".into())),
                };
                (key, value)
            })
            .collect();
        Self {
            entries,
            fallback: None,
            label: label.into(),
        }
    }

    pub fn with_fallback(mut self, backend: Box<dyn LlmBackend>) -> Self {
        self.fallback = Some(backend);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, call: &LlmCall<'_>) -> Result<Completion, BackendError> {
        let key = (call.prompt_hash.to_string(), call.occurrence, call.attempt);
        match (self.entries.get(&key), &self.fallback) {
            (Some(Ok(c)), _) => Ok(c.clone()),
            (Some(Err(e)), _) => Err(BackendError::Transport(e.clone())),
            (None, Some(fallback)) => fallback.complete(call),
            (None, None) => Err(BackendError::ReplayMiss {
                prompt_hash: call.prompt_hash.to_string(),
                occurrence: call.occurrence,
                attempt: call.attempt,
            }),
        }
    }

    fn identity(&self) -> String {
        match &self.fallback {
            Some(f) => format!("record:{}+{}", self.label, f.identity()),
            None => format!("replay:{}", self.label),
        }
    }

    fn live_calls(&self) -> u64 {
        self.fallback.as_ref().map_or(0, |f| f.live_calls())
    }
}
