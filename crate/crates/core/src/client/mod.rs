//! Chat-completions client for REPEAT and EXPLAIN probes.

mod ledger;
mod rate_limit;
mod retry;
pub mod wire;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::PredictionDistribution;

pub use ledger::{format_currency, CostLedger, LedgerSnapshot, PriceTable};
pub use rate_limit::RateLimiter;
pub use retry::RetryPolicy;
pub use wire::{parse_completion, parse_top_logprobs, ChatMessage, ChatRequest, Usage, WireError};

pub const REPEAT_SYSTEM_PROMPT: &str = "Repeat user message exactly";
pub const EXPLAIN_SYSTEM_PROMPT: &str =
    "Explain user message. Respond with JSON {text: <user message>, meaning: <meaning>}";

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4-1106-preview";

/// Alternatives requested per position.
pub const TOP_LOGPROBS: u8 = 5;
/// Output budget of a confirmation completion.
pub const CONFIRM_MAX_TOKENS: u32 = 20;
pub const EXPLAIN_MAX_TOKENS: u32 = 256;
pub const CONFIRM_TEMPERATURE: f64 = 1.0;

#[derive(Error, Debug)]
pub enum ClientError {
    #[error("invalid client configuration: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint answered HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Wire(#[from] WireError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Repeat,
    Explain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRequest {
    pub kind: ProbeKind,
    pub token_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub want_logprobs: bool,
    pub top_logprobs: u8,
}

impl ProbeRequest {
    /// Single-token REPEAT probe used by the scan pass.
    pub fn repeat(token_text: impl Into<String>, temperature: f64) -> Self {
        Self {
            kind: ProbeKind::Repeat,
            token_text: token_text.into(),
            temperature,
            max_output_tokens: 1,
            want_logprobs: true,
            top_logprobs: TOP_LOGPROBS,
        }
    }

    /// REPEAT probe at temperature 1.0 with room for a multi-token answer.
    /// Logprobs stay on so an empty first-position list is observable.
    pub fn confirm(token_text: impl Into<String>) -> Self {
        Self {
            temperature: CONFIRM_TEMPERATURE,
            max_output_tokens: CONFIRM_MAX_TOKENS,
            ..Self::repeat(token_text, CONFIRM_TEMPERATURE)
        }
    }

    pub fn explain(token_text: impl Into<String>, temperature: f64) -> Self {
        Self {
            kind: ProbeKind::Explain,
            token_text: token_text.into(),
            temperature,
            max_output_tokens: EXPLAIN_MAX_TOKENS,
            want_logprobs: false,
            top_logprobs: TOP_LOGPROBS,
        }
    }

    pub fn system_prompt(&self) -> &'static str {
        match self.kind {
            ProbeKind::Repeat => REPEAT_SYSTEM_PROMPT,
            ProbeKind::Explain => EXPLAIN_SYSTEM_PROMPT,
        }
    }

    /// The token text is sent verbatim as the whole user message.
    pub fn to_wire(&self, model: &str) -> ChatRequest {
        ChatRequest {
            model: model.to_string(),
            messages: vec![
                ChatMessage::system(self.system_prompt()),
                ChatMessage::user(self.token_text.clone()),
            ],
            temperature: self.temperature,
            max_tokens: self.max_output_tokens,
            logprobs: self.want_logprobs,
            top_logprobs: self.want_logprobs.then_some(self.top_logprobs),
        }
    }

    pub fn payload(&self, model: &str) -> Vec<u8> {
        serde_json::to_vec(&self.to_wire(model)).expect("request serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FinishStatus {
    Ok,
    ApiError { code: u16 },
    EmptyLogprobs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub distribution: PredictionDistribution,
    pub completion_text: String,
    pub finish_status: FinishStatus,
    pub usage: Usage,
    pub attempts: u32,
}

/// One confirmation sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionOutcome {
    pub text: String,
    /// Last HTTP status when every attempt failed.
    pub error: Option<u16>,
    pub empty_logprobs: bool,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainOutcome {
    pub completion_text: String,
    /// The completion parses as a JSON object with string `text` and `meaning`.
    pub json_wellformed: bool,
    /// The `text` field equals the probed token text.
    pub echo_match: bool,
    pub explained_text: Option<String>,
    pub error: Option<u16>,
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub retry: RetryPolicy,
    /// Requests per minute across all workers; `None` disables pacing.
    pub rate_per_minute: Option<u32>,
    pub request_timeout: Duration,
    pub price: PriceTable,
}

impl ClientConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: DEFAULT_MODEL.to_string(),
            api_key: None,
            retry: RetryPolicy::default(),
            rate_per_minute: None,
            request_timeout: Duration::from_secs(60),
            price: PriceTable::default(),
        }
    }

    pub fn with_env_api_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }
}

enum Exchange {
    Success(Vec<u8>),
    /// Every attempt ended in a retryable status; carries the last one.
    Exhausted(u16),
}

/// Shareable across tasks; the ledger and rate limiter are internal.
#[derive(Debug, Clone)]
pub struct LlmClient {
    http: reqwest::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    limiter: Option<Arc<RateLimiter>>,
    ledger: Arc<CostLedger>,
}

impl LlmClient {
    pub fn new(config: ClientConfig) -> Result<Self, ClientError> {
        config.retry.validate()?;
        if config.rate_per_minute == Some(0) {
            return Err(ClientError::Config("rate must be positive".into()));
        }
        let http = reqwest::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(Self {
            http,
            endpoint: config.endpoint,
            model: config.model,
            api_key: config.api_key,
            retry: config.retry,
            limiter: config.rate_per_minute.map(|r| Arc::new(RateLimiter::per_minute(r))),
            ledger: Arc::new(CostLedger::new(config.price)),
        })
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    /// Scan-pass REPEAT probe: first-position distribution of a one-token reply.
    pub async fn repeat_probe(
        &self,
        token_text: &str,
        temperature: f64,
    ) -> Result<ProbeResult, ClientError> {
        let req = ProbeRequest::repeat(token_text, temperature);
        let (exchange, attempts) = self.send(&req).await?;
        match exchange {
            Exchange::Exhausted(code) => Ok(ProbeResult {
                distribution: PredictionDistribution::empty(),
                completion_text: String::new(),
                finish_status: FinishStatus::ApiError { code },
                usage: Usage::default(),
                attempts,
            }),
            Exchange::Success(body) => {
                let parsed = parse_completion(&body)?;
                let distribution = parse_top_logprobs(&body)?;
                let finish_status = if distribution.is_empty() {
                    FinishStatus::EmptyLogprobs
                } else {
                    FinishStatus::Ok
                };
                Ok(ProbeResult {
                    distribution,
                    completion_text: parsed.content,
                    finish_status,
                    usage: parsed.usage,
                    attempts,
                })
            }
        }
    }

    /// Confirmation sample: REPEAT at temperature 1.0, judged on completion text.
    pub async fn confirm_probe(&self, token_text: &str) -> Result<CompletionOutcome, ClientError> {
        let req = ProbeRequest::confirm(token_text);
        match self.send(&req).await?.0 {
            Exchange::Exhausted(code) => Ok(CompletionOutcome {
                text: String::new(),
                error: Some(code),
                empty_logprobs: false,
                usage: Usage::default(),
            }),
            Exchange::Success(body) => {
                let parsed = parse_completion(&body)?;
                Ok(CompletionOutcome {
                    text: parsed.content,
                    error: None,
                    empty_logprobs: parsed.distribution.is_some_and(|d| d.is_empty()),
                    usage: parsed.usage,
                })
            }
        }
    }

    pub async fn explain_probe(
        &self,
        token_text: &str,
        temperature: f64,
    ) -> Result<ExplainOutcome, ClientError> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(ClientError::Config(format!(
                "temperature {temperature} outside [0, 2]"
            )));
        }
        let req = ProbeRequest::explain(token_text, temperature);
        match self.send(&req).await?.0 {
            Exchange::Exhausted(code) => Ok(ExplainOutcome {
                completion_text: String::new(),
                json_wellformed: false,
                echo_match: false,
                explained_text: None,
                error: Some(code),
            }),
            Exchange::Success(body) => {
                let parsed = parse_completion(&body)?;
                Ok(judge_explanation(token_text, parsed.content))
            }
        }
    }

    async fn send(&self, req: &ProbeRequest) -> Result<(Exchange, u32), ClientError> {
        let payload = req.payload(&self.model);
        let mut last_status = None;
        let mut last_transport = None;
        for attempt in 0..self.retry.max_attempts {
            if attempt > 0 {
                tokio::time::sleep(self.retry.delay(attempt - 1)).await;
            }
            if let Some(limiter) = &self.limiter {
                limiter.acquire().await;
            }
            let mut builder = self
                .http
                .post(&self.endpoint)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(payload.clone());
            if let Some(key) = &self.api_key {
                builder = builder.bearer_auth(key);
            }
            let response = match builder.send().await {
                Ok(r) => r,
                Err(e) => {
                    log::debug!("attempt {} transport error: {e}", attempt + 1);
                    last_transport = Some(e.to_string());
                    last_status = None;
                    continue;
                }
            };
            self.ledger.record_request();
            let status = response.status().as_u16();
            let body = match response.bytes().await {
                Ok(b) => b.to_vec(),
                Err(e) => {
                    last_transport = Some(e.to_string());
                    last_status = None;
                    continue;
                }
            };
            if status == 200 {
                let usage = parse_completion(&body)?.usage;
                self.ledger.record_usage(&usage);
                return Ok((Exchange::Success(body), attempt + 1));
            }
            if !self.retry.is_retryable(status) {
                return Err(ClientError::Status {
                    status,
                    body: String::from_utf8_lossy(&body).into_owned(),
                });
            }
            log::debug!("attempt {} got HTTP {status}", attempt + 1);
            last_status = Some(status);
        }
        match (last_status, last_transport) {
            (Some(code), _) => Ok((Exchange::Exhausted(code), self.retry.max_attempts)),
            (None, message) => Err(ClientError::Transport {
                attempts: self.retry.max_attempts,
                message: message.unwrap_or_default(),
            }),
        }
    }
}

/// Checks an EXPLAIN completion for schema conformance and echo fidelity.
/// A surrounding Markdown code fence is tolerated.
pub fn judge_explanation(token_text: &str, completion: String) -> ExplainOutcome {
    let trimmed = completion.trim();
    let unfenced = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .unwrap_or(trimmed);
    let explained = serde_json::from_str::<serde_json::Value>(unfenced)
        .ok()
        .and_then(|v| match (v.get("text"), v.get("meaning")) {
            (Some(serde_json::Value::String(t)), Some(serde_json::Value::String(_))) => {
                Some(t.clone())
            }
            _ => None,
        });
    ExplainOutcome {
        json_wellformed: explained.is_some(),
        echo_match: explained.as_deref() == Some(token_text),
        explained_text: explained,
        completion_text: completion,
        error: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeat_request_shape() {
        let req = ProbeRequest::repeat("\tproject", 0.0);
        let wire = req.to_wire("gpt-4-1106-preview");
        assert_eq!(wire.messages[0].content, "Repeat user message exactly");
        assert_eq!(wire.messages[1].content, "\tproject");
        assert_eq!(wire.max_tokens, 1);
        assert_eq!(wire.top_logprobs, Some(5));
        let json: serde_json::Value = serde_json::from_slice(&req.payload("m")).unwrap();
        assert_eq!(json["logprobs"], true);
        assert_eq!(json["temperature"], 0.0);
        assert_eq!(json["messages"][0]["role"], "system");
    }

    #[test]
    fn payload_is_deterministic() {
        let a = ProbeRequest::explain("atrigesimal", 0.3).payload("m");
        let b = ProbeRequest::explain("atrigesimal", 0.3).payload("m");
        assert_eq!(a, b);
        let json: serde_json::Value = serde_json::from_slice(&a).unwrap();
        assert!(json.get("top_logprobs").is_none());
        assert_eq!(
            json["messages"][0]["content"],
            "Explain user message. Respond with JSON {text: <user message>, meaning: <meaning>}"
        );
    }

    #[test]
    fn confirm_request_shape() {
        let w = ProbeRequest::confirm("x").to_wire("m");
        assert_eq!(w.temperature, 1.0);
        assert_eq!(w.max_tokens, 20);
        assert!(w.logprobs);
    }

    #[test]
    fn explanation_judging() {
        let ok = judge_explanation("useRal", r#"{"text": "useRal", "meaning": "?"}"#.into());
        assert!(ok.json_wellformed && ok.echo_match);
        let off = judge_explanation("useRal", r#"{"text": "render", "meaning": "?"}"#.into());
        assert!(off.json_wellformed && !off.echo_match);
        assert_eq!(off.explained_text.as_deref(), Some("render"));
        let fenced = judge_explanation("a", "```json\n{\"text\": \"a\", \"meaning\": \"b\"}\n```".into());
        assert!(fenced.echo_match);
        let broken = judge_explanation("a", r#"{"text": "a", meaning"#.into());
        assert!(!broken.json_wellformed && !broken.echo_match);
        let missing = judge_explanation("a", r#"{"text": "a"}"#.into());
        assert!(!missing.json_wellformed);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = ClientConfig::new("http://127.0.0.1:1");
        cfg.rate_per_minute = Some(0);
        assert!(LlmClient::new(cfg).is_err());
    }

    #[tokio::test]
    async fn unreachable_endpoint_is_a_transport_error() {
        let mut cfg = ClientConfig::new("http://127.0.0.1:9/v1/chat/completions");
        cfg.retry = RetryPolicy::fast(2);
        let client = LlmClient::new(cfg).unwrap();
        let err = client.repeat_probe("a", 0.0).await.unwrap_err();
        assert!(matches!(err, ClientError::Transport { attempts: 2, .. }));
        assert_eq!(client.ledger().snapshot().requests, 0);
    }
}
