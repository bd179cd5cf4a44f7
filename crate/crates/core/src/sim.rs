//! A deterministic mock LLM: softmax over toy logits, temperature scaling,
//! top-k and top-p truncation and seeded inverse-CDF draws.
//!
//! Generation pipelines always apply the steps in the order
//! temperature → top-k → top-p → sample.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{SamplingParams, TokenDraw};
use crate::num;
use crate::provider::{ChatProvider, Generation, TokenUsage};
use crate::rng;
use crate::{Error, ProviderError, Result};

/// Raw scores over a toy vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLogits")]
pub struct LogitVector {
    vocab: Vec<String>,
    logits: Vec<f64>,
}

#[derive(Deserialize)]
struct RawLogits {
    vocab: Vec<String>,
    logits: Vec<f64>,
}

impl TryFrom<RawLogits> for LogitVector {
    type Error = Error;

    fn try_from(raw: RawLogits) -> Result<Self> {
        LogitVector::new(raw.vocab, raw.logits)
    }
}

impl LogitVector {
    pub fn new(vocab: Vec<String>, logits: Vec<f64>) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::InvalidInput("empty vocabulary".into()));
        }
        if vocab.len() != logits.len() {
            return Err(Error::InvalidInput(format!(
                "{} vocabulary entries but {} logits",
                vocab.len(),
                logits.len()
            )));
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidInput("logits must be finite".into()));
        }
        Ok(Self { vocab, logits })
    }

    /// Vocabulary `t0, t1, ...` for quick fixtures.
    pub fn anonymous(logits: Vec<f64>) -> Result<Self> {
        let vocab = (0..logits.len()).map(|i| format!("t{i}")).collect();
        Self::new(vocab, logits)
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

/// A probability distribution over the next token.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    vocab: Vec<String>,
    probs: Vec<f64>,
}

impl NextTokenDistribution {
    /// Checks that `probs` is non-negative and sums to 1 within 1e-9.
    pub fn new(vocab: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if vocab.is_empty() || vocab.len() != probs.len() {
            return Err(Error::InvalidInput(
                "distribution needs one probability per vocabulary entry".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "probabilities must be non-negative and sum to 1, got sum {total}"
            )));
        }
        Ok(Self { vocab, probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn entropy(&self) -> f64 {
        num::shannon_entropy(self.probs.iter().copied())
    }

    /// Indices by descending probability, lowest index first on ties.
    fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.probs.len()).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        idx
    }

    fn keep(&self, kept: &[usize]) -> Self {
        let mass: f64 = kept.iter().map(|&i| self.probs[i]).sum();
        let mut probs = alloc::vec![0.0; self.probs.len()];
        for &i in kept {
            probs[i] = self.probs[i] / mass;
        }
        Self {
            vocab: self.vocab.clone(),
            probs,
        }
    }

    fn one_hot(vocab: Vec<String>, at: usize) -> Self {
        let mut probs = alloc::vec![0.0; vocab.len()];
        probs[at] = 1.0;
        Self { vocab, probs }
    }
}

/// `p_i = e^{z_i} / sum_j e^{z_j}`, evaluated after subtracting the max logit.
pub fn softmax(lv: &LogitVector) -> NextTokenDistribution {
    let max = lv.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = lv.logits.iter().map(|z| num::exp(z - max)).collect();
    let total: f64 = exps.iter().sum();
    NextTokenDistribution {
        vocab: lv.vocab.clone(),
        probs: exps.into_iter().map(|e| e / total).collect(),
    }
}

/// `p_i = e^{z_i / t} / sum_j e^{z_j / t}`; `t = 0` is a one-hot on the argmax
/// (lowest index on ties).
pub fn softmax_with_temperature(lv: &LogitVector, t: f64) -> Result<NextTokenDistribution> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!(
            "temperature must be finite and non-negative, got {t}"
        )));
    }
    let max = lv.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if t == 0.0 {
        let at = lv.logits.iter().position(|z| *z == max).unwrap_or(0);
        return Ok(NextTokenDistribution::one_hot(lv.vocab.clone(), at));
    }
    let exps: Vec<f64> = lv.logits.iter().map(|z| num::exp((z - max) / t)).collect();
    let total: f64 = exps.iter().sum();
    Ok(NextTokenDistribution {
        vocab: lv.vocab.clone(),
        probs: exps.into_iter().map(|e| e / total).collect(),
    })
}

/// Keeps the `k` most probable tokens and renormalizes.
pub fn apply_top_k(dist: &NextTokenDistribution, k: usize) -> Result<NextTokenDistribution> {
    if k == 0 || k > dist.probs.len() {
        return Err(Error::InvalidInput(format!(
            "top-k must lie in [1, {}], got {k}",
            dist.probs.len()
        )));
    }
    if k == dist.probs.len() {
        return Ok(dist.clone());
    }
    let ranked = dist.ranked();
    Ok(dist.keep(&ranked[..k]))
}

/// Keeps the shortest most-probable prefix whose cumulative mass reaches `p`
/// (at least one token) and renormalizes.
pub fn apply_top_p(dist: &NextTokenDistribution, p: f64) -> Result<NextTokenDistribution> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput(format!("top-p must lie in (0, 1], got {p}")));
    }
    if p == 1.0 {
        return Ok(dist.clone());
    }
    let ranked = dist.ranked();
    let mut cumulative = 0.0;
    let mut cut = ranked.len();
    for (n, &i) in ranked.iter().enumerate() {
        cumulative += dist.probs[i];
        if cumulative >= p {
            cut = n + 1;
            break;
        }
    }
    Ok(dist.keep(&ranked[..cut]))
}

/// Full pipeline for one step: temperature, then top-k, then top-p.
pub fn next_token_distribution(
    lv: &LogitVector,
    params: &SamplingParams,
) -> Result<NextTokenDistribution> {
    let mut dist = softmax_with_temperature(lv, params.temperature())?;
    if let Some(k) = params.top_k() {
        let k = (k.get() as usize).min(dist.probs.len());
        dist = apply_top_k(&dist, k)?;
    }
    apply_top_p(&dist, params.top_p())
}

/// Inverse-CDF draw using one uniform from `rng`.
pub fn sample_token_with<R: Rng + ?Sized>(
    dist: &NextTokenDistribution,
    rng: &mut R,
    position: u32,
) -> TokenDraw {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut chosen = None;
    for (i, p) in dist.probs.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        cumulative += p;
        chosen = Some(i);
        if u < cumulative {
            break;
        }
    }
    // a valid distribution has positive mass somewhere
    let i = chosen.expect("distribution without positive mass");
    TokenDraw::new(dist.vocab[i].clone(), num::ln(dist.probs[i]).min(0.0), position)
        .expect("positive probability maps to a valid log-probability")
}

/// Draws one token with a fresh generator seeded by `seed`.
pub fn sample_token(dist: &NextTokenDistribution, seed: u64) -> TokenDraw {
    sample_token_with(dist, &mut rng::seeded(seed), 0)
}

/// Context → next-token logits. Serialized as a JSON object mapping context
/// strings to `{"vocab": [...], "logits": [...]}`.
pub type LogitTable = BTreeMap<String, LogitVector>;

/// Token that ends a simulated generation without being emitted.
pub const END_OF_TEXT: &str = "<eos>";

/// Chat provider that generates from a [`LogitTable`].
///
/// At each step the context is the prompt followed by the tokens generated so
/// far, separated by single spaces. The entry used is the longest table key
/// that is a suffix of the (right-trimmed) context; generation stops when no
/// key matches, when [`END_OF_TEXT`] is drawn, or after `max_tokens` tokens.
/// All draws for one call come from one generator seeded with the request
/// seed (0 when absent).
#[derive(Debug, Clone)]
pub struct SimulatedChat {
    model_id: String,
    table: LogitTable,
    max_tokens: usize,
}

impl SimulatedChat {
    pub fn new(model_id: impl Into<String>, table: LogitTable, max_tokens: usize) -> Self {
        Self {
            model_id: model_id.into(),
            table,
            max_tokens: max_tokens.max(1),
        }
    }

    fn lookup(&self, context: &str) -> Option<&LogitVector> {
        let context = context.trim_end();
        self.table
            .iter()
            .filter(|(k, _)| context.ends_with(k.as_str()))
            .max_by_key(|(k, _)| k.len())
            .map(|(_, v)| v)
    }
}

impl ChatProvider for SimulatedChat {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn generate(
        &self,
        prompt: &str,
        params: &SamplingParams,
        want_logprobs: bool,
    ) -> core::result::Result<Generation, ProviderError> {
        let mut rng = rng::seeded(params.seed().unwrap_or(0));
        let mut context = String::from(prompt.trim_end());
        let mut tokens = Vec::new();
        while tokens.len() < self.max_tokens {
            let Some(lv) = self.lookup(&context) else {
                break;
            };
            let dist = next_token_distribution(lv, params)
                .map_err(|e| ProviderError::InvalidResponse(format!("{e}")))?;
            let draw = sample_token_with(&dist, &mut rng, tokens.len() as u32);
            if draw.token_text() == END_OF_TEXT {
                break;
            }
            context.push(' ');
            context.push_str(draw.token_text());
            tokens.push(draw);
        }
        if tokens.is_empty() {
            return Err(ProviderError::MissingFixture(String::from(prompt)));
        }
        let text = tokens
            .iter()
            .map(TokenDraw::token_text)
            .collect::<Vec<_>>()
            .join(" ");
        Ok(Generation {
            text,
            usage: TokenUsage {
                prompt: prompt.split_whitespace().count() as u64,
                completion: tokens.len() as u64,
            },
            tokens: want_logprobs.then_some(tokens),
            logprobs_unavailable: false,
            model_id: self.model_id.clone(),
            latency_ms: 0,
        })
    }
}
