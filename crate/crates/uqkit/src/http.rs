//! HTTP clients for the chat, embedding and NLI services.
//!
//! Wire formats (all `POST`, JSON bodies, optional `Authorization: Bearer`):
//!
//! `<base_url>/chat/completions`
//! ```json
//! {"model": "m", "messages": [{"role": "user", "content": "..."}],
//!  "temperature": 1.0, "top_p": 1.0, "logprobs": true, "seed": 42}
//! ```
//! `top_k` is added only when set. The reply is read from
//! `choices[0].message.content`, `choices[0].logprobs.content[].{token, logprob}`
//! and `usage.{prompt_tokens, completion_tokens}`.
//!
//! `<base_url>/embeddings`: `{"model": "m", "input": ["...", ...]}`, reply
//! `{"data": [{"index": 0, "embedding": [...]}, ...]}`.
//!
//! `<base_url>/nli`: `{"model": "m", "premise": "...", "hypothesis": "..."}`,
//! reply `{"logits": {"entailment": 2.0, "neutral": 0.0, "contradiction": 1.0}}`.
//!
//! Status 429, any 5xx and transport failures are retried up to `max_retries`
//! times after the first attempt, sleeping `backoff_base_ms * 2^n` scaled by
//! a random factor in `[0.5, 1)`. Other non-2xx statuses fail at once.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::Deserialize;
use serde_json::{json, Value};
use uqkit_core::provider::{ChatProvider, Embedder, Generation, NliModel, TokenUsage};
use uqkit_core::{ProviderError, SamplingParams, TokenDraw};

use crate::config::HttpConfig;

const BODY_EXCERPT: usize = 200;

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Limiter);

impl Limiter {
    pub fn new(permits: usize) -> Self {
        assert!(permits > 0, "a limiter needs at least one permit");
        Self {
            free: Mutex::new(permits),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("limiter poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("limiter poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("limiter poisoned") += 1;
        self.0.cv.notify_one();
    }
}

fn excerpt(body: &str) -> String {
    match body.char_indices().nth(BODY_EXCERPT) {
        Some((i, _)) => format!("{}...", &body[..i]),
        None => body.to_string(),
    }
}

/// One configured endpoint family with retries and a parallelism limit.
#[derive(Debug)]
pub struct HttpClient {
    config: HttpConfig,
    agent: ureq::Agent,
    limiter: Limiter,
    api_key: Option<String>,
}

impl HttpClient {
    /// Reads the API key from `config.api_key_env` when that variable is set.
    pub fn new(config: HttpConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            limiter: Limiter::new(config.max_parallel.max(1)),
            config,
            agent,
            api_key,
        }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.config.base_url.trim_end_matches('/'))
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = self.config.backoff_base_ms as f64 * 2f64.powi(retry as i32);
        let jitter: f64 = rand::rng().random_range(0.5..1.0);
        Duration::from_millis((base * jitter) as u64)
    }

    /// Posts `body`, retrying transient failures. Returns the parsed reply
    /// and the latency of the successful attempt.
    pub fn post(&self, path: &str, body: &Value) -> Result<(Value, u64), ProviderError> {
        let url = self.url(path);
        let _permit = self.limiter.acquire();
        let attempts = self.config.max_retries + 1;
        let mut last = ProviderError::Unreachable { attempts: 0, message: String::new() };
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1));
            }
            let started = Instant::now();
            let mut request = self.agent.post(&url);
            if let Some(key) = &self.api_key {
                request = request.header("Authorization", &format!("Bearer {key}"));
            }
            let mut response = match request.send_json(body) {
                Ok(r) => r,
                Err(e) => {
                    last = ProviderError::Unreachable {
                        attempts: attempt + 1,
                        message: e.to_string(),
                    };
                    continue;
                }
            };
            let status = response.status().as_u16();
            let text = match response.body_mut().read_to_string() {
                Ok(t) => t,
                Err(e) => {
                    last = ProviderError::Unreachable {
                        attempts: attempt + 1,
                        message: e.to_string(),
                    };
                    continue;
                }
            };
            if (200..300).contains(&status) {
                let value = serde_json::from_str(&text).map_err(|e| {
                    ProviderError::InvalidResponse(format!("{e}: {}", excerpt(&text)))
                })?;
                return Ok((value, started.elapsed().as_millis() as u64));
            }
            last = ProviderError::Rejected {
                status,
                body: excerpt(&text),
            };
            if !(status == 429 || (500..600).contains(&status)) {
                break;
            }
        }
        Err(last)
    }
}

fn decode<T: for<'de> Deserialize<'de>>(value: Value) -> Result<T, ProviderError> {
    serde_json::from_value(value).map_err(|e| ProviderError::InvalidResponse(e.to_string()))
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    model: Option<String>,
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Chat provider speaking the chat-completions convention.
#[derive(Debug)]
pub struct HttpChat {
    client: HttpClient,
}

impl HttpChat {
    pub fn new(config: HttpConfig) -> Self {
        Self { client: HttpClient::new(config) }
    }

    pub fn request_body(&self, prompt: &str, params: &SamplingParams, want_logprobs: bool) -> Value {
        let mut body = json!({
            "model": self.client.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature(),
            "top_p": params.top_p(),
            "logprobs": want_logprobs,
        });
        if let Some(seed) = params.seed() {
            body["seed"] = json!(seed);
        }
        if let Some(k) = params.top_k() {
            body["top_k"] = json!(k.get());
        }
        body
    }
}

impl ChatProvider for HttpChat {
    fn model_id(&self) -> &str {
        &self.client.config.model
    }

    fn generate(
        &self,
        prompt: &str,
        params: &SamplingParams,
        want_logprobs: bool,
    ) -> Result<Generation, ProviderError> {
        let body = self.request_body(prompt, params, want_logprobs);
        let (value, latency_ms) = self.client.post("chat/completions", &body)?;
        let reply: ChatReply = decode(value)?;
        let choice = reply
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::InvalidResponse("reply has no choices".into()))?;
        let text = choice.message.content.unwrap_or_default();
        let tokens = match choice.logprobs.and_then(|l| l.content) {
            Some(list) if want_logprobs && !list.is_empty() => Some(
                list.into_iter()
                    .enumerate()
                    .map(|(i, t)| {
                        // servers occasionally report -0.0 or a rounding-level positive value
                        let lp = if t.logprob > 0.0 && t.logprob < 1e-6 { 0.0 } else { t.logprob };
                        TokenDraw::new(t.token, lp, i as u32)
                            .map_err(|e| ProviderError::InvalidResponse(e.to_string()))
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            _ => None,
        };
        let usage = reply.usage.map_or(TokenUsage::default(), |u| TokenUsage {
            prompt: u.prompt_tokens,
            completion: u.completion_tokens,
        });
        Ok(Generation {
            logprobs_unavailable: want_logprobs && tokens.is_none(),
            tokens,
            text,
            model_id: reply.model.unwrap_or_else(|| self.client.config.model.clone()),
            usage,
            latency_ms,
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingReply {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

#[derive(Debug)]
pub struct HttpEmbedder {
    client: HttpClient,
}

impl HttpEmbedder {
    pub fn new(config: HttpConfig) -> Self {
        Self { client: HttpClient::new(config) }
    }
}

impl Embedder for HttpEmbedder {
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let body = json!({"model": self.client.config.model, "input": texts});
        let (value, _) = self.client.post("embeddings", &body)?;
        let mut reply: EmbeddingReply = decode(value)?;
        reply.data.sort_by_key(|d| d.index);
        if reply.data.iter().enumerate().any(|(i, d)| d.index != i) {
            return Err(ProviderError::InvalidResponse(
                "embedding indices do not cover the request".into(),
            ));
        }
        Ok(reply.data.into_iter().map(|d| d.embedding).collect())
    }
}

#[derive(Deserialize)]
struct NliReply {
    logits: NliLogits,
}

#[derive(Deserialize)]
struct NliLogits {
    entailment: f64,
    neutral: f64,
    contradiction: f64,
}

#[derive(Debug)]
pub struct HttpNli {
    client: HttpClient,
}

impl HttpNli {
    pub fn new(config: HttpConfig) -> Self {
        Self { client: HttpClient::new(config) }
    }
}

impl NliModel for HttpNli {
    fn logits(&self, premise: &str, hypothesis: &str) -> Result<[f64; 3], ProviderError> {
        let body = json!({
            "model": self.client.config.model,
            "premise": premise,
            "hypothesis": hypothesis,
        });
        let (value, _) = self.client.post("nli", &body)?;
        let reply: NliReply = decode(value)?;
        let l = reply.logits;
        Ok([l.entailment, l.neutral, l.contradiction])
    }
}
