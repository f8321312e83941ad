//! Chat-completions JSON schema, shared by the client and the mock server.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::metrics::{MetricsError, PredictionDistribution, TopLogprob, TOP_K};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub logprobs: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_logprobs: Option<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub id: String,
    pub object: String,
    pub model: String,
    pub choices: Vec<Choice>,
    pub usage: UsageBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub index: u32,
    pub message: ChatMessage,
    pub logprobs: Option<ChoiceLogprobs>,
    pub finish_reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceLogprobs {
    pub content: Vec<PositionLogprobs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionLogprobs {
    pub token: String,
    pub logprob: f64,
    pub top_logprobs: Vec<TopLogprob>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageBlock {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

impl From<Usage> for UsageBlock {
    fn from(u: Usage) -> Self {
        Self {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
            total_tokens: u.prompt_tokens + u.completion_tokens,
        }
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum WireError {
    #[error("response is not JSON: {0}")]
    Json(String),
    #[error("missing or mistyped field at `{0}`")]
    Missing(String),
    #[error("invalid distribution at `{path}`: {source}")]
    Distribution {
        path: String,
        #[source]
        source: MetricsError,
    },
}

/// The parts of a completion response the probes use.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCompletion {
    pub content: String,
    pub usage: Usage,
    /// `None` when the response carries no logprobs object.
    pub distribution: Option<PredictionDistribution>,
}

/// Extracts the first-position top-logprob list.
pub fn parse_top_logprobs(body: &[u8]) -> Result<PredictionDistribution, WireError> {
    let doc = parse_json(body)?;
    let logprobs = first_choice(&doc)?
        .get("logprobs")
        .filter(|v| v.is_object())
        .ok_or_else(|| WireError::Missing("choices[0].logprobs".into()))?;
    distribution_from(logprobs)
}

pub fn parse_completion(body: &[u8]) -> Result<ParsedCompletion, WireError> {
    let doc = parse_json(body)?;
    let choice = first_choice(&doc)?;
    let content = match choice.get("message").and_then(|m| m.get("content")) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) => String::new(),
        _ => return Err(WireError::Missing("choices[0].message.content".into())),
    };
    let distribution = match choice.get("logprobs") {
        None | Some(Value::Null) => None,
        Some(v) => Some(distribution_from(v)?),
    };
    let usage = doc
        .get("usage")
        .ok_or_else(|| WireError::Missing("usage".into()))?;
    let count = |name: &str| {
        usage
            .get(name)
            .and_then(Value::as_u64)
            .ok_or_else(|| WireError::Missing(format!("usage.{name}")))
    };
    Ok(ParsedCompletion {
        content,
        usage: Usage {
            prompt_tokens: count("prompt_tokens")?,
            completion_tokens: count("completion_tokens")?,
        },
        distribution,
    })
}

fn parse_json(body: &[u8]) -> Result<Value, WireError> {
    serde_json::from_slice(body).map_err(|e| WireError::Json(e.to_string()))
}

fn first_choice(doc: &Value) -> Result<&Value, WireError> {
    doc.get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| WireError::Missing("choices[0]".into()))
}

fn distribution_from(logprobs: &Value) -> Result<PredictionDistribution, WireError> {
    let content = logprobs
        .get("content")
        .and_then(Value::as_array)
        .ok_or_else(|| WireError::Missing("choices[0].logprobs.content".into()))?;
    let Some(first) = content.first() else {
        return Ok(PredictionDistribution::empty());
    };
    let top = first
        .get("top_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| WireError::Missing("choices[0].logprobs.content[0].top_logprobs".into()))?;
    let mut entries = Vec::with_capacity(top.len());
    for (i, item) in top.iter().enumerate() {
        let path = |f: &str| format!("choices[0].logprobs.content[0].top_logprobs[{i}].{f}");
        let token = item
            .get("token")
            .and_then(Value::as_str)
            .ok_or_else(|| WireError::Missing(path("token")))?;
        let logprob = item
            .get("logprob")
            .and_then(Value::as_f64)
            .ok_or_else(|| WireError::Missing(path("logprob")))?;
        entries.push(TopLogprob::new(token, logprob));
    }
    // Servers may return more alternatives than requested.
    entries.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
    entries.truncate(TOP_K);
    PredictionDistribution::new(entries).map_err(|source| WireError::Distribution {
        path: "choices[0].logprobs.content[0].top_logprobs".into(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn body(logprobs: Value) -> Vec<u8> {
        serde_json::to_vec(&json!({
            "id": "x", "object": "chat.completion", "model": "m",
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": "hi"},
                "logprobs": logprobs,
                "finish_reason": "length"
            }],
            "usage": {"prompt_tokens": 7, "completion_tokens": 1, "total_tokens": 8}
        }))
        .unwrap()
    }

    #[test]
    fn five_entries_in_order() {
        let lps = [-0.02, -5.0, -6.0, -7.0, -8.0];
        let top: Vec<Value> = lps
            .iter()
            .enumerate()
            .map(|(i, lp)| json!({"token": format!("t{i}"), "logprob": lp}))
            .collect();
        let b = body(json!({"content": [{"token": "t0", "logprob": -0.02, "top_logprobs": top}]}));
        let d = parse_top_logprobs(&b).unwrap();
        assert_eq!(d.len(), 5);
        let got: Vec<f64> = d.entries().iter().map(|e| e.logprob).collect();
        assert_eq!(got, lps);
        assert_eq!(d.top_token(), Some("t0"));
    }

    #[test]
    fn empty_content_is_an_empty_distribution() {
        let d = parse_top_logprobs(&body(json!({"content": []}))).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn missing_logprobs_names_the_path() {
        let err = parse_top_logprobs(&body(Value::Null)).unwrap_err();
        assert_eq!(err, WireError::Missing("choices[0].logprobs".into()));
        let err = parse_top_logprobs(&body(json!({}))).unwrap_err();
        assert_eq!(err, WireError::Missing("choices[0].logprobs.content".into()));
        let b = body(json!({"content": [{"token": "a", "logprob": 0.0, "top_logprobs": [{"token": "a"}]}]}));
        assert_eq!(
            parse_top_logprobs(&b).unwrap_err(),
            WireError::Missing("choices[0].logprobs.content[0].top_logprobs[0].logprob".into())
        );
        assert!(matches!(parse_top_logprobs(b"not json"), Err(WireError::Json(_))));
        assert_eq!(
            parse_top_logprobs(b"{\"choices\": []}").unwrap_err(),
            WireError::Missing("choices[0]".into())
        );
    }

    #[test]
    fn completion_with_usage() {
        let p = parse_completion(&body(Value::Null)).unwrap();
        assert_eq!(p.content, "hi");
        assert_eq!(p.usage, Usage { prompt_tokens: 7, completion_tokens: 1 });
        assert!(p.distribution.is_none());
    }

    #[test]
    fn extra_alternatives_are_truncated() {
        let top: Vec<Value> = (0..8)
            .map(|i| json!({"token": format!("t{i}"), "logprob": -(i as f64) - 2.0}))
            .collect();
        let b = body(json!({"content": [{"token": "t0", "logprob": -2.0, "top_logprobs": top}]}));
        assert_eq!(parse_top_logprobs(&b).unwrap().len(), 5);
    }
}
