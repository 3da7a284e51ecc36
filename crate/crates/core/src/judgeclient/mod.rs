//! Client for chat-completions-compatible inference endpoints.
//!
//! Requests carry one user message with the prompt text followed by the
//! chart image as a base64 data URL. Responses are cached on disk by
//! (model, prompt digest, generation parameters) so that re-runs replay the
//! first observed completion.

mod cache;
mod limiter;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use futures::stream::{self, StreamExt};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::datamodel::{ImageRef, JudgmentSpec, RawJudgment};
use crate::promptforge::{params_fingerprint, RenderedPrompt};

pub use cache::{cache_key, CacheEntry, ResponseCache};
pub use limiter::RateLimiter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// First backoff delay; doubled on each further attempt.
    pub backoff_base_ms: u64,
    /// Adds a uniform random delay of up to one base interval.
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base_ms: 1000,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let base = self.backoff_base_ms;
        let mut ms = base.saturating_mul(1u64 << (attempt.saturating_sub(1)).min(16));
        if self.jitter && base > 0 {
            ms += rand::thread_rng().gen_range(0..base);
        }
        Duration::from_millis(ms)
    }
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout() -> f64 {
    120.0
}

/// Where and how to reach a judge model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<u32>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            auth_env: None,
            max_concurrency: default_concurrency(),
            requests_per_minute: None,
            retry: RetryPolicy::default(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn validate(&self) -> Result<(), JudgeError> {
        let bad = |m: &str| Err(JudgeError::InvalidConfig(m.to_string()));
        if self.max_concurrency < 1 {
            return bad("max_concurrency must be at least 1");
        }
        if self.retry.max_attempts < 1 {
            return bad("retry.max_attempts must be at least 1");
        }
        if self.requests_per_minute == Some(0) {
            return bad("requests_per_minute must be positive");
        }
        if !(self.timeout_secs > 0.0) {
            return bad("timeout_secs must be positive");
        }
        if self.base_url.trim().is_empty() || self.model.trim().is_empty() {
            return bad("base_url and model are required");
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("endpoint error after {attempts} attempt(s){}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Endpoint {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
    #[error("request timed out after {attempts} attempt(s) of {timeout_secs} s")]
    Timeout { attempts: u32, timeout_secs: f64 },
    #[error("environment variable {0} with the auth token is not set")]
    MissingToken(String),
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
    #[error("cannot load image {uri}: {source}")]
    Image {
        uri: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cache write failed: {0}")]
    Cache(#[from] std::io::Error),
    #[error("unexpected response body: {0}")]
    BadResponse(String),
    #[error("{0}")]
    Precondition(String),
}

impl JudgeError {
    /// True when the request was given up on after retrying.
    pub fn retries_exhausted(&self) -> bool {
        matches!(self, JudgeError::Endpoint { attempts, .. } | JudgeError::Timeout { attempts, .. } if *attempts > 1)
    }
}

/// Text and telemetry of one completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency_ms: f64,
    pub tokens_in: Option<u64>,
    pub tokens_out: Option<u64>,
    pub tokens_estimated: bool,
    pub retrieved_from_cache: bool,
    pub prompt_digest: String,
}

/// A prompt plus the bookkeeping needed to label its judgment.
#[derive(Debug, Clone)]
pub struct JudgeRequest {
    pub prompt: RenderedPrompt,
    pub spec: JudgmentSpec,
    pub sample_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub tokens_per_sec: f64,
    pub ms_per_token: f64,
    pub total_tokens: u64,
    pub total_secs: f64,
    pub runs: usize,
    /// True when any run's token count was estimated from the reply text.
    #[serde(default)]
    pub tokens_estimated: bool,
}

impl Throughput {
    /// Builds the figures from a token total and summed wall time.
    pub fn from_totals(total_tokens: u64, total_secs: f64, runs: usize) -> Self {
        let tokens_per_sec = total_tokens as f64 / total_secs;
        Self {
            tokens_per_sec,
            ms_per_token: 1000.0 / tokens_per_sec,
            total_tokens,
            total_secs,
            runs,
            tokens_estimated: false,
        }
    }
}

/// Whitespace token count, used when the endpoint reports no usage.
pub fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

fn mime_for(uri: &str) -> &'static str {
    let lower = uri.to_ascii_lowercase();
    if lower.ends_with(".jpg") || lower.ends_with(".jpeg") {
        "image/jpeg"
    } else if lower.ends_with(".gif") {
        "image/gif"
    } else if lower.ends_with(".webp") {
        "image/webp"
    } else {
        "image/png"
    }
}

/// URL to put in the `image_url` part: remote and data URLs pass through,
/// local files are inlined.
pub fn image_url(image: &ImageRef) -> Result<String, JudgeError> {
    match image.local_path() {
        None => Ok(image.uri.clone()),
        Some(path) => {
            let bytes = std::fs::read(&path).map_err(|source| JudgeError::Image {
                uri: image.uri.clone(),
                source,
            })?;
            let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
            Ok(format!("data:{};base64,{b64}", mime_for(&image.uri)))
        }
    }
}

/// Request body for `prompt` addressed to `model`.
pub fn request_body(model: &str, prompt: &RenderedPrompt) -> Result<Value, JudgeError> {
    let mut content = vec![json!({"type": "text", "text": prompt.text})];
    for image in &prompt.attachments {
        content.push(json!({"type": "image_url", "image_url": {"url": image_url(image)?}}));
    }
    Ok(json!({
        "model": model,
        "messages": [{"role": "user", "content": content}],
        "temperature": prompt.generation_params.temperature,
        "max_tokens": prompt.generation_params.max_output_tokens,
    }))
}

fn parse_response(body: &Value) -> Result<(String, Option<u64>, Option<u64>), JudgeError> {
    if body["choices"].get(0).is_none() {
        return Err(JudgeError::BadResponse("no choices".into()));
    }
    let content = &body["choices"][0]["message"]["content"];
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        Value::Null => String::new(),
        other => return Err(JudgeError::BadResponse(format!("content is {other}"))),
    };
    let usage = &body["usage"];
    Ok((text, usage["prompt_tokens"].as_u64(), usage["completion_tokens"].as_u64()))
}

enum Attempt {
    Done(Value),
    Retry { status: Option<u16>, message: String, timed_out: bool },
    Fatal(JudgeError),
}

/// Shareable judge client for one endpoint.
#[derive(Debug, Clone)]
pub struct JudgeClient {
    endpoint: EndpointConfig,
    http: reqwest::Client,
    token: Option<String>,
    cache: Option<ResponseCache>,
    limiter: Option<Arc<RateLimiter>>,
    in_flight: Arc<Semaphore>,
}

impl JudgeClient {
    /// Builds a client. The auth token is read from the configured
    /// environment variable now, so a missing token fails early.
    pub fn new(endpoint: EndpointConfig, cache_dir: Option<PathBuf>) -> Result<Self, JudgeError> {
        endpoint.validate()?;
        let token = match &endpoint.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| JudgeError::MissingToken(var.clone()))?),
            None => None,
        };
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
            .build()
            .map_err(|e| JudgeError::InvalidConfig(e.to_string()))?;
        let limiter = endpoint
            .requests_per_minute
            .map(|rpm| Arc::new(RateLimiter::new(rpm, endpoint.max_concurrency as u32)));
        Ok(Self {
            in_flight: Arc::new(Semaphore::new(endpoint.max_concurrency)),
            endpoint,
            http,
            token,
            cache: cache_dir.map(ResponseCache::new),
            limiter,
        })
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    /// Completion for `prompt`, from the cache when possible.
    pub async fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, JudgeError> {
        let digest = prompt.digest();
        let key = cache_key(&self.endpoint.model, &digest, &prompt.generation_params);
        if let Some(entry) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(Completion {
                text: entry.text,
                latency_ms: entry.latency_ms,
                tokens_in: entry.tokens_in,
                tokens_out: entry.tokens_out,
                tokens_estimated: entry.tokens_estimated,
                retrieved_from_cache: true,
                prompt_digest: digest,
            });
        }
        let mut fresh = self.fetch(prompt).await?;
        fresh.prompt_digest = digest.clone();
        if let Some(cache) = &self.cache {
            let entry = CacheEntry {
                model: self.endpoint.model.clone(),
                prompt_digest: digest,
                params: params_fingerprint(&prompt.generation_params),
                text: fresh.text.clone(),
                latency_ms: fresh.latency_ms,
                tokens_in: fresh.tokens_in,
                tokens_out: fresh.tokens_out,
                tokens_estimated: fresh.tokens_estimated,
            };
            // a concurrent writer may have pinned a different response first
            let pinned = cache.put(&key, &entry)?;
            fresh.text = pinned.text;
        }
        Ok(fresh)
    }

    /// Sends `prompt` to the endpoint, bypassing the cache.
    pub async fn fetch(&self, prompt: &RenderedPrompt) -> Result<Completion, JudgeError> {
        let body = request_body(&self.endpoint.model, prompt)?;
        let _permit = self.in_flight.acquire().await.expect("semaphore never closed");
        let policy = &self.endpoint.retry;
        let mut attempt = 0;
        loop {
            attempt += 1;
            if let Some(limiter) = &self.limiter {
                limiter.acquire().await;
            }
            let started = Instant::now();
            match self.send_once(&body).await {
                Attempt::Done(value) => {
                    let latency_ms = started.elapsed().as_secs_f64() * 1000.0;
                    let (text, tokens_in, tokens_out) = parse_response(&value)?;
                    let (tokens_out, tokens_estimated) = match tokens_out {
                        Some(n) => (Some(n), false),
                        None => (Some(estimate_tokens(&text)), true),
                    };
                    return Ok(Completion {
                        text,
                        latency_ms,
                        tokens_in,
                        tokens_out,
                        tokens_estimated,
                        retrieved_from_cache: false,
                        prompt_digest: String::new(),
                    });
                }
                Attempt::Fatal(mut e) => {
                    if let JudgeError::Endpoint { attempts, .. } = &mut e {
                        *attempts = attempt;
                    }
                    return Err(e);
                }
                Attempt::Retry {
                    status,
                    message,
                    timed_out,
                } => {
                    if attempt >= policy.max_attempts {
                        return Err(if timed_out {
                            JudgeError::Timeout {
                                attempts: attempt,
                                timeout_secs: self.endpoint.timeout_secs,
                            }
                        } else {
                            JudgeError::Endpoint {
                                status,
                                attempts: attempt,
                                message,
                            }
                        });
                    }
                    let delay = policy.delay(attempt);
                    log::debug!("attempt {attempt} failed ({message}); retrying in {delay:?}");
                    tokio::time::sleep(delay).await;
                }
            }
        }
    }

    async fn send_once(&self, body: &Value) -> Attempt {
        let mut req = self.http.post(self.endpoint.completions_url()).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry {
                    status: None,
                    message: e.to_string(),
                    timed_out: e.is_timeout(),
                }
            }
        };
        let status = resp.status();
        if status.is_success() {
            return match resp.json::<Value>().await {
                Ok(v) => Attempt::Done(v),
                Err(e) if e.is_timeout() => Attempt::Retry {
                    status: None,
                    message: e.to_string(),
                    timed_out: true,
                },
                Err(e) => Attempt::Fatal(JudgeError::BadResponse(e.to_string())),
            };
        }
        let text = resp.text().await.unwrap_or_default();
        let message = format!("{status}: {}", text.chars().take(200).collect::<String>());
        if status.as_u16() == 429 || status.is_server_error() {
            Attempt::Retry {
                status: Some(status.as_u16()),
                message,
                timed_out: false,
            }
        } else {
            Attempt::Fatal(JudgeError::Endpoint {
                status: Some(status.as_u16()),
                attempts: 1,
                message,
            })
        }
    }

    /// Judgment for one request.
    pub async fn evaluate(&self, request: &JudgeRequest) -> Result<RawJudgment, JudgeError> {
        let c = self.complete(&request.prompt).await?;
        Ok(RawJudgment {
            spec: request.spec.clone(),
            sample_id: request.sample_id.clone(),
            raw_text: c.text,
            prompt_digest: c.prompt_digest,
            latency_ms: c.latency_ms,
            tokens_in: c.tokens_in,
            tokens_out: c.tokens_out,
            tokens_estimated: c.tokens_estimated,
            retrieved_from_cache: c.retrieved_from_cache,
        })
    }

    /// Judgments in input order. At most `max_concurrency` requests are in
    /// flight; a failing item yields an error in its position.
    pub async fn batch_evaluate(&self, requests: &[JudgeRequest]) -> Vec<Result<RawJudgment, JudgeError>> {
        stream::iter(requests.iter().map(|r| self.evaluate(r)))
            .buffered(self.endpoint.max_concurrency)
            .collect()
            .await
    }

    /// Output-token throughput over `n_runs` uncached requests: total tokens
    /// divided by summed request wall time.
    pub async fn probe_throughput(&self, prompt: &RenderedPrompt, n_runs: usize) -> Result<Throughput, JudgeError> {
        if n_runs == 0 {
            return Err(JudgeError::Precondition("n_runs must be at least 1".into()));
        }
        let mut tokens = 0;
        let mut secs = 0.0;
        let mut estimated = false;
        for _ in 0..n_runs {
            let c = self.fetch(prompt).await?;
            tokens += c.tokens_out.unwrap_or(0);
            secs += c.latency_ms / 1000.0;
            estimated |= c.tokens_estimated;
        }
        if tokens == 0 || secs <= 0.0 {
            return Err(JudgeError::BadResponse("no output tokens observed".into()));
        }
        let mut t = Throughput::from_totals(tokens, secs, n_runs);
        t.tokens_estimated = estimated;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn throughput_figures() {
        let t = Throughput::from_totals(100, 1.0, 1);
        assert_eq!(t.tokens_per_sec, 100.0);
        assert_eq!(t.ms_per_token, 10.0);
        let t = Throughput::from_totals(63, 1.0, 1);
        assert!((t.ms_per_token - 15.873).abs() < 1e-3);
        let t = Throughput::from_totals(110, 1.0, 1);
        assert!((t.ms_per_token - 9.0909).abs() < 1e-3);
    }

    #[test]
    fn config_validation() {
        let mut c = EndpointConfig::new("http://x", "m");
        assert!(c.validate().is_ok());
        c.max_concurrency = 0;
        assert!(c.validate().is_err());
        c.max_concurrency = 1;
        c.retry.max_attempts = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy {
            max_attempts: 3,
            backoff_base_ms: 10,
            jitter: false,
        };
        assert_eq!(p.delay(1), Duration::from_millis(10));
        assert_eq!(p.delay(3), Duration::from_millis(40));
    }

    #[test]
    fn response_shapes() {
        let v = json!({"choices": [{"message": {"content": "hi there"}}], "usage": {"prompt_tokens": 5, "completion_tokens": 2}});
        assert_eq!(parse_response(&v).unwrap(), ("hi there".into(), Some(5), Some(2)));
        let v = json!({"choices": [{"message": {"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]}}]});
        assert_eq!(parse_response(&v).unwrap(), ("ab".into(), None, None));
        assert!(parse_response(&json!({"error": "x"})).is_err());
    }

    #[test]
    fn whitespace_estimate() {
        assert_eq!(estimate_tokens("a  b\nc"), 3);
        assert_eq!(estimate_tokens(""), 0);
    }
}
