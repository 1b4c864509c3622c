//! HTTP transport and the two provider wire formats.

use std::time::Duration;

use serde_json::{json, Map, Value};

use super::CompletionRequest;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Value,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
}

/// Sends one JSON POST. Implementations must be callable from many threads.
pub trait Transport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpReply, TransportError>;
}

/// Blocking reqwest client. Do not call from inside an async runtime.
#[derive(Debug, Clone)]
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        ReqwestTransport {
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Default for ReqwestTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for ReqwestTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpReply, TransportError> {
        let mut builder = self.client.post(&request.url).timeout(request.timeout).json(&request.body);
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        Ok(HttpReply { status, body })
    }
}

pub(crate) fn openai_chat_url(base: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with("/v1") {
        format!("{base}/chat/completions")
    } else {
        format!("{base}/v1/chat/completions")
    }
}

pub(crate) fn openai_embeddings_url(base: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with("/v1") {
        format!("{base}/embeddings")
    } else {
        format!("{base}/v1/embeddings")
    }
}

/// The whole prompt goes in a single user message.
pub(crate) fn openai_body(req: &CompletionRequest) -> Value {
    json!({
        "model": req.model,
        "messages": [{"role": "user", "content": req.prompt}],
        "max_tokens": req.max_tokens,
        "temperature": req.temperature,
    })
}

pub(crate) fn gemini_url(base: &str, model: &str) -> String {
    format!("{}/v1beta/models/{model}:generateContent", base.trim_end_matches('/'))
}

pub(crate) fn gemini_body(req: &CompletionRequest) -> Value {
    json!({
        "contents": [{"role": "user", "parts": [{"text": req.prompt}]}],
        "generationConfig": {
            "maxOutputTokens": req.max_tokens,
            "temperature": req.temperature,
        },
    })
}

/// Completion text and metadata (finish reason, usage) from a 2xx body.
pub(crate) fn parse_openai(body: &str) -> Result<(String, Map<String, Value>), String> {
    let v: Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let choice = v.pointer("/choices/0").ok_or("response has no choices")?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let mut meta = Map::new();
    if let Some(r) = choice.get("finish_reason") {
        meta.insert("finish_reason".into(), r.clone());
    }
    if let Some(u) = v.get("usage") {
        meta.insert("usage".into(), u.clone());
    }
    if let Some(m) = v.get("model") {
        meta.insert("model".into(), m.clone());
    }
    Ok((text, meta))
}

pub(crate) fn parse_gemini(body: &str) -> Result<(String, Map<String, Value>), String> {
    let v: Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let candidate = v.pointer("/candidates/0").ok_or("response has no candidates")?;
    let text: String = candidate
        .pointer("/content/parts")
        .and_then(Value::as_array)
        .map(|parts| parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect())
        .unwrap_or_default();
    let mut meta = Map::new();
    if let Some(r) = candidate.get("finishReason") {
        meta.insert("finish_reason".into(), r.clone());
    }
    if let Some(u) = v.get("usageMetadata") {
        meta.insert("usage".into(), u.clone());
    }
    Ok((text, meta))
}

pub(crate) fn parse_embedding(body: &str) -> Result<Vec<f64>, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
    v.pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or("response has no embedding")?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| "non-numeric embedding component".to_string()))
        .collect()
}
