//! Interfaces to the three external model services (chat completion, text
//! embedding, natural language inference) and deterministic stub
//! implementations.
//!
//! The traits are the raw backend surface. The free functions
//! [`chat_generate`], [`embed_batch`] and [`nli_judge`] enforce the
//! contracts every caller relies on: non-empty inputs, order preservation,
//! unit-norm embeddings, and labels that agree with the logits.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{SamplingParams, TokenDraw};
use crate::num;
use crate::text;
use crate::ProviderError;

/// Tokens billed for one request.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt + self.completion
    }
}

/// What a chat backend returned for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<TokenDraw>>,
    /// Log-probabilities were requested but not supplied.
    #[serde(default)]
    pub logprobs_unavailable: bool,
    pub model_id: String,
    #[serde(default)]
    pub usage: TokenUsage,
    /// Backend-measured wall-clock latency; stubs report 0.
    #[serde(default)]
    pub latency_ms: u64,
}

pub trait ChatProvider: Send + Sync {
    fn model_id(&self) -> &str;

    fn generate(
        &self,
        prompt: &str,
        params: &SamplingParams,
        want_logprobs: bool,
    ) -> Result<Generation, ProviderError>;
}

pub trait Embedder: Send + Sync {
    /// One raw vector per text, in input order. Need not be normalized.
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

pub trait NliModel: Send + Sync {
    /// Raw `(entailment, neutral, contradiction)` logits.
    fn logits(&self, premise: &str, hypothesis: &str) -> Result<[f64; 3], ProviderError>;
}

impl<T: ChatProvider + ?Sized> ChatProvider for &T {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn generate(
        &self,
        prompt: &str,
        params: &SamplingParams,
        want_logprobs: bool,
    ) -> Result<Generation, ProviderError> {
        (**self).generate(prompt, params, want_logprobs)
    }
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        (**self).embed_raw(texts)
    }
}

impl<T: NliModel + ?Sized> NliModel for &T {
    fn logits(&self, premise: &str, hypothesis: &str) -> Result<[f64; 3], ProviderError> {
        (**self).logits(premise, hypothesis)
    }
}

/// Validated chat call. A missing-logprobs response is not an error; it comes
/// back with `tokens = None` and `logprobs_unavailable = true`.
pub fn chat_generate<P: ChatProvider + ?Sized>(
    provider: &P,
    prompt: &str,
    params: &SamplingParams,
    want_logprobs: bool,
) -> Result<Generation, ProviderError> {
    if prompt.trim().is_empty() {
        return Err(ProviderError::InvalidPrompt);
    }
    let mut generation = provider.generate(prompt, params, want_logprobs)?;
    if !want_logprobs {
        generation.tokens = None;
        generation.logprobs_unavailable = false;
    } else if generation.tokens.as_ref().is_none_or(|t| t.is_empty()) {
        generation.tokens = None;
        generation.logprobs_unavailable = true;
    }
    Ok(generation)
}

/// A unit-length embedding of one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    source_text: String,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit L2 norm.
    pub fn new(values: Vec<f64>, source_text: impl Into<String>) -> Result<Self, ProviderError> {
        let source_text = source_text.into();
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::InvalidResponse(format!(
                "embedding of {source_text:?} is empty or non-finite"
            )));
        }
        let norm = num::norm(&values);
        if !(norm > 0.0) {
            return Err(ProviderError::InvalidResponse(format!(
                "embedding of {source_text:?} has zero norm"
            )));
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
            source_text,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        num::dot(&self.values, &other.values)
    }
}

/// Validated embedding call: every text non-empty, output order matches input,
/// every vector re-normalized, one dimension across the batch.
pub fn embed_batch<E: Embedder + ?Sized>(
    embedder: &E,
    texts: &[&str],
) -> Result<Vec<EmbeddingVector>, ProviderError> {
    if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(ProviderError::InvalidInput {
            index,
            reason: "empty text".into(),
        });
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let raw = embedder.embed_raw(texts)?;
    if raw.len() != texts.len() {
        return Err(ProviderError::InvalidResponse(format!(
            "asked for {} embeddings, got {}",
            texts.len(),
            raw.len()
        )));
    }
    let out = raw
        .into_iter()
        .zip(texts)
        .map(|(v, t)| EmbeddingVector::new(v, *t))
        .collect::<Result<Vec<_>, _>>()?;
    let dim = out[0].dim();
    if out.iter().any(|v| v.dim() != dim) {
        return Err(ProviderError::InvalidResponse(
            "embedding dimension changed within one batch".into(),
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entailment,
    Neutral,
    Contradiction,
}

/// Three NLI logits and the label they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliJudgment {
    pub logit_entail: f64,
    pub logit_neutral: f64,
    pub logit_contradict: f64,
    pub label: NliLabel,
}

impl NliJudgment {
    /// Label is the argmax; exact ties resolve in the order entailment,
    /// neutral, contradiction.
    pub fn from_logits(entail: f64, neutral: f64, contradict: f64) -> Self {
        let label = if entail >= neutral && entail >= contradict {
            NliLabel::Entailment
        } else if neutral >= contradict {
            NliLabel::Neutral
        } else {
            NliLabel::Contradiction
        };
        Self {
            logit_entail: entail,
            logit_neutral: neutral,
            logit_contradict: contradict,
            label,
        }
    }

    /// `exp(l_e) / (exp(l_e) + exp(l_c))`, ignoring the neutral logit.
    pub fn entail_probability(&self) -> f64 {
        1.0 / (1.0 + num::exp(self.logit_contradict - self.logit_entail))
    }

    pub fn is_entailment(&self) -> bool {
        self.label == NliLabel::Entailment
    }
}

pub fn nli_judge<N: NliModel + ?Sized>(
    nli: &N,
    premise: &str,
    hypothesis: &str,
) -> Result<NliJudgment, ProviderError> {
    for (index, s) in [premise, hypothesis].into_iter().enumerate() {
        if s.trim().is_empty() {
            return Err(ProviderError::InvalidInput {
                index,
                reason: "empty NLI input".into(),
            });
        }
    }
    let [e, n, c] = nli.logits(premise, hypothesis)?;
    if !(e.is_finite() && n.is_finite() && c.is_finite()) {
        return Err(ProviderError::InvalidResponse("non-finite NLI logits".into()));
    }
    Ok(NliJudgment::from_logits(e, n, c))
}

/// One canned chat answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubReply {
    pub text: String,
    /// `(token, logprob)` pairs; omitted when the fixture simulates a backend
    /// without log-probabilities.
    #[serde(default)]
    pub tokens: Option<Vec<(String, f64)>>,
}

/// Table-driven chat stub: prompt → reply. Unknown prompts are errors.
#[derive(Debug, Clone, Default)]
pub struct StubChat {
    model_id: String,
    table: BTreeMap<String, StubReply>,
}

impl StubChat {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            table: BTreeMap::new(),
        }
    }

    pub fn with_reply(mut self, prompt: impl Into<String>, reply: StubReply) -> Self {
        self.table.insert(prompt.into(), reply);
        self
    }

    /// Single-token reply with the given log-probability.
    pub fn with_token(self, prompt: impl Into<String>, text: &str, logprob: f64) -> Self {
        self.with_reply(
            prompt,
            StubReply {
                text: text.into(),
                tokens: Some(vec![(text.into(), logprob)]),
            },
        )
    }
}

impl ChatProvider for StubChat {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn generate(
        &self,
        prompt: &str,
        _params: &SamplingParams,
        want_logprobs: bool,
    ) -> Result<Generation, ProviderError> {
        let reply = self
            .table
            .get(prompt)
            .ok_or_else(|| ProviderError::MissingFixture(prompt.into()))?;
        let tokens = match (&reply.tokens, want_logprobs) {
            (Some(t), true) => Some(
                t.iter()
                    .enumerate()
                    .map(|(i, (tok, lp))| TokenDraw::new(tok.clone(), *lp, i as u32))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| ProviderError::InvalidResponse(e.to_string()))?,
            ),
            _ => None,
        };
        let completion = reply.tokens.as_ref().map_or_else(
            || reply.text.split_whitespace().count(),
            |t| t.len(),
        ) as u64;
        Ok(Generation {
            logprobs_unavailable: want_logprobs && tokens.is_none(),
            tokens,
            text: reply.text.clone(),
            model_id: self.model_id.clone(),
            usage: TokenUsage {
                prompt: prompt.split_whitespace().count() as u64,
                completion,
            },
            latency_ms: 0,
        })
    }
}

/// Deterministic embedder. Texts listed in the table get their planted
/// vector; everything else gets a signed feature-hashed bag of words over
/// [`text::word_set`], so texts sharing words point in similar directions.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    dim: usize,
    table: BTreeMap<String, Vec<f64>>,
}

impl StubEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            table: BTreeMap::new(),
        }
    }

    pub fn with_vector(mut self, text: impl Into<String>, v: Vec<f64>) -> Self {
        assert_eq!(v.len(), self.dim, "planted vector has the wrong dimension");
        self.table.insert(text.into(), v);
        self
    }

    fn hashed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let words = text::word_set(text);
        let mut add = |bytes: &[u8]| {
            let h = text::fnv1a64(bytes);
            let slot = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[slot] += sign;
        };
        if words.is_empty() {
            add(text.as_bytes());
        } else {
            for w in &words {
                add(w.as_bytes());
            }
        }
        if v.iter().all(|x| *x == 0.0) {
            v[(text::fnv1a64(text.as_bytes()) % self.dim as u64) as usize] = 1.0;
        }
        v
    }
}

impl Embedder for StubEmbedder {
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts
            .iter()
            .map(|t| self.table.get(*t).cloned().unwrap_or_else(|| self.hashed(t)))
            .collect())
    }
}

/// Deterministic NLI stub.
///
/// Pairs in the table return their planted logits. Otherwise identical texts
/// (after normalization) entail each other strongly, and the remaining pairs
/// are scored by the share `c` of hypothesis words found in the premise:
/// `l_e = 6c - 3`, `l_n = 0.25`, `l_c = 3 - 6c`.
#[derive(Debug, Clone, Default)]
pub struct StubNli {
    table: BTreeMap<(String, String), [f64; 3]>,
    constant: Option<[f64; 3]>,
}

impl StubNli {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every pair returns these logits.
    pub fn constant(logits: [f64; 3]) -> Self {
        Self {
            table: BTreeMap::new(),
            constant: Some(logits),
        }
    }

    pub fn with_pair(
        mut self,
        premise: impl Into<String>,
        hypothesis: impl Into<String>,
        logits: [f64; 3],
    ) -> Self {
        self.table.insert((premise.into(), hypothesis.into()), logits);
        self
    }
}

impl NliModel for StubNli {
    fn logits(&self, premise: &str, hypothesis: &str) -> Result<[f64; 3], ProviderError> {
        if let Some(l) = self.table.get(&(premise.to_string(), hypothesis.to_string())) {
            return Ok(*l);
        }
        if let Some(l) = self.constant {
            return Ok(l);
        }
        if text::normalize_answer(premise) == text::normalize_answer(hypothesis) {
            return Ok([8.0, 0.0, -8.0]);
        }
        let p = text::word_set(premise);
        let h = text::word_set(hypothesis);
        let covered = if h.is_empty() {
            0.0
        } else {
            h.intersection(&p).count() as f64 / h.len() as f64
        };
        Ok([6.0 * covered - 3.0, 0.25, 3.0 - 6.0 * covered])
    }
}
