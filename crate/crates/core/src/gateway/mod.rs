//! One completion interface over OpenAI-compatible, Gemini and scripted mock
//! providers, with a response cache, retries and bounded-parallel batches.

pub mod cache;
pub mod mock;
pub mod wire;

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::RngExt;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub use cache::{CachedEntry, ResponseCache};
pub use mock::{MockReply, MockRule, MockScript};
pub use wire::{HttpReply, HttpRequest, ReqwestTransport, Transport, TransportError};

use crate::metrics::{EmbeddingProvider, HashedNgramEmbedder, MetricError};

pub const DEFAULT_MAX_TOKENS: u32 = 300;
pub const DEFAULT_TEMPERATURE: f64 = 0.3;
pub const DEFAULT_OPENAI_BASE_URL: &str = "https://api.openai.com";
pub const DEFAULT_GEMINI_BASE_URL: &str = "https://generativelanguage.googleapis.com";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    #[serde(rename = "openai", alias = "openai_compat")]
    OpenAICompat,
    Gemini,
    Mock,
}

impl Provider {
    pub fn name(self) -> &'static str {
        match self {
            Provider::OpenAICompat => "openai",
            Provider::Gemini => "gemini",
            Provider::Mock => "mock",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "openai" | "openai_compat" | "openai-compat" => Some(Provider::OpenAICompat),
            "gemini" => Some(Provider::Gemini),
            "mock" => Some(Provider::Mock),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub provider: Provider,
    pub model: String,
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl CompletionRequest {
    pub fn new(provider: Provider, model: impl Into<String>, prompt: impl Into<String>) -> Self {
        CompletionRequest {
            provider,
            model: model.into(),
            prompt: prompt.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Hex sha256 over a fixed-order JSON encoding of every request field.
    pub fn hash(&self) -> String {
        request_hash(self)
    }
}

pub fn request_hash(req: &CompletionRequest) -> String {
    // Keys are written in a fixed order; floats use serde_json's shortest
    // round-trip formatting, which is platform independent.
    let canonical = format!(
        "{{\"provider\":{},\"model\":{},\"prompt\":{},\"max_tokens\":{},\"temperature\":{}}}",
        json!(req.provider.name()),
        json!(req.model),
        json!(req.prompt),
        req.max_tokens,
        json!(req.temperature),
    );
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub request_hash: String,
    pub from_cache: bool,
    pub latency_ms: u64,
    pub retries: u32,
    pub provider_meta: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("authentication failed (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("provider error (HTTP {status}): {body}")]
    Provider { status: u16, body: String },
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("connection failed after {attempts} attempts: {message}")]
    Connect { attempts: u32, message: String },
    #[error("missing credentials: set {0}")]
    MissingCredentials(&'static str),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("mock script has no reply for this prompt")]
    MockUnmatched,
    #[error("{0} is not supported by this provider")]
    Unsupported(&'static str),
}

/// Exponential backoff: `base * 2^k`, scaled by a uniform factor in
/// `[1 - jitter, 1 + jitter]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base: Duration::from_secs(1),
            jitter: 0.25,
        }
    }
}

impl RetryPolicy {
    /// Same retry count, no waiting. For tests and the mock provider.
    pub fn immediate() -> Self {
        RetryPolicy {
            base: Duration::ZERO,
            jitter: 0.0,
            ..Self::default()
        }
    }

    pub fn delay(&self, retry: u32) -> Duration {
        let nominal = self.base.as_secs_f64() * 2f64.powi(retry as i32);
        let factor = if self.jitter > 0.0 {
            1.0 + rand::rng().random_range(-self.jitter..=self.jitter)
        } else {
            1.0
        };
        Duration::from_secs_f64((nominal * factor).max(0.0))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Credentials {
    pub openai_api_key: Option<String>,
    pub openai_base_url: Option<String>,
    pub gemini_api_key: Option<String>,
    pub gemini_base_url: Option<String>,
}

impl Credentials {
    /// Reads `OPENAI_API_KEY`, `OPENAI_BASE_URL` and `GEMINI_API_KEY`.
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        Credentials {
            openai_api_key: var("OPENAI_API_KEY"),
            openai_base_url: var("OPENAI_BASE_URL"),
            gemini_api_key: var("GEMINI_API_KEY"),
            gemini_base_url: None,
        }
    }
}

/// Counter snapshot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    /// Transport calls, retries included.
    pub live_calls: u64,
    pub retries: u64,
    pub cache_hits: u64,
}

#[derive(Debug, Default)]
struct Counters {
    live_calls: AtomicU64,
    retries: AtomicU64,
    cache_hits: AtomicU64,
}

/// Serves the mock provider through the same retry path as live providers.
struct MockTransport(MockScript);

impl Transport for MockTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpReply, TransportError> {
        let prompt = request.body["prompt"].as_str().unwrap_or_default();
        let hash = request.body["request_hash"].as_str().unwrap_or_default();
        match self.0.reply_for(prompt, hash) {
            Some(MockReply::Text(t)) => Ok(HttpReply {
                status: 200,
                body: json!({ "text": t }).to_string(),
            }),
            Some(MockReply::Status { status }) => Ok(HttpReply {
                status: *status,
                body: String::new(),
            }),
            Some(MockReply::Timeout { .. }) => Err(TransportError::Timeout),
            None => Ok(HttpReply {
                status: 404,
                body: "unmatched".into(),
            }),
        }
    }
}

/// Completion gateway. Safe to share between threads.
pub struct Gateway {
    cache: ResponseCache,
    retry: RetryPolicy,
    credentials: Credentials,
    transport: Arc<dyn Transport>,
    mock: Option<MockTransport>,
    timeout: Duration,
    counters: Counters,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("cache", &self.cache)
            .field("retry", &self.retry)
            .field("mock", &self.mock.is_some())
            .finish_non_exhaustive()
    }
}

impl Gateway {
    /// Live gateway: reqwest transport, credentials from the environment.
    pub fn new(cache: ResponseCache) -> Self {
        Gateway {
            cache,
            retry: RetryPolicy::default(),
            credentials: Credentials::from_env(),
            transport: Arc::new(ReqwestTransport::new()),
            mock: None,
            timeout: Duration::from_secs(60),
            counters: Counters::default(),
        }
    }

    /// Offline gateway answering `Provider::Mock` requests from `script`,
    /// with an in-memory cache and no backoff waits.
    pub fn mock(script: MockScript) -> Self {
        Gateway::new(ResponseCache::memory())
            .with_mock(script)
            .with_retry(RetryPolicy::immediate())
    }

    pub fn with_mock(mut self, script: MockScript) -> Self {
        self.mock = Some(MockTransport(script));
        self
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_credentials(mut self, credentials: Credentials) -> Self {
        self.credentials = credentials;
        self
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = transport;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            live_calls: self.counters.live_calls.load(Ordering::Relaxed),
            retries: self.counters.retries.load(Ordering::Relaxed),
            cache_hits: self.counters.cache_hits.load(Ordering::Relaxed),
        }
    }

    fn http_request(&self, req: &CompletionRequest, hash: &str) -> Result<HttpRequest, GatewayError> {
        let (url, headers, body) = match req.provider {
            Provider::OpenAICompat => {
                let key = self
                    .credentials
                    .openai_api_key
                    .as_deref()
                    .ok_or(GatewayError::MissingCredentials("OPENAI_API_KEY"))?;
                let base = self.credentials.openai_base_url.as_deref().unwrap_or(DEFAULT_OPENAI_BASE_URL);
                (
                    wire::openai_chat_url(base),
                    vec![("Authorization".to_string(), format!("Bearer {key}"))],
                    wire::openai_body(req),
                )
            }
            Provider::Gemini => {
                let key = self
                    .credentials
                    .gemini_api_key
                    .as_deref()
                    .ok_or(GatewayError::MissingCredentials("GEMINI_API_KEY"))?;
                let base = self.credentials.gemini_base_url.as_deref().unwrap_or(DEFAULT_GEMINI_BASE_URL);
                (
                    wire::gemini_url(base, &req.model),
                    vec![("x-goog-api-key".to_string(), key.to_string())],
                    wire::gemini_body(req),
                )
            }
            Provider::Mock => (
                "mock://".to_string(),
                Vec::new(),
                json!({ "prompt": req.prompt, "request_hash": hash }),
            ),
        };
        Ok(HttpRequest {
            url,
            headers,
            body,
            timeout: self.timeout,
        })
    }

    fn transport_for(&self, provider: Provider) -> Result<&dyn Transport, GatewayError> {
        match provider {
            Provider::Mock => self
                .mock
                .as_ref()
                .map(|m| m as &dyn Transport)
                .ok_or(GatewayError::Unsupported("the mock provider (no script loaded)")),
            _ => Ok(self.transport.as_ref()),
        }
    }

    /// Sends with retries on 429, 5xx, timeouts and connection failures.
    /// Returns the 2xx body and the number of retries taken.
    fn send_with_retry(&self, provider: Provider, http: &HttpRequest) -> Result<(String, u32), GatewayError> {
        let transport = self.transport_for(provider)?;
        let mut retry = 0u32;
        loop {
            self.counters.live_calls.fetch_add(1, Ordering::Relaxed);
            let attempts = retry + 1;
            let failure = match transport.send(http) {
                Ok(reply) if (200..300).contains(&reply.status) => return Ok((reply.body, retry)),
                Ok(reply) if matches!(reply.status, 401 | 403) => {
                    return Err(GatewayError::Auth {
                        status: reply.status,
                        body: reply.body,
                    })
                }
                Ok(reply) if provider == Provider::Mock && reply.status == 404 && reply.body == "unmatched" => {
                    return Err(GatewayError::MockUnmatched)
                }
                Ok(reply) if reply.status == 429 => GatewayError::RateLimited { attempts },
                Ok(reply) if reply.status >= 500 => GatewayError::Provider {
                    status: reply.status,
                    body: reply.body,
                },
                Ok(reply) => {
                    return Err(GatewayError::Provider {
                        status: reply.status,
                        body: reply.body,
                    })
                }
                Err(TransportError::Timeout) => GatewayError::Timeout { attempts },
                Err(TransportError::Connect(message)) => GatewayError::Connect { attempts, message },
            };
            if retry >= self.retry.max_retries {
                return Err(failure);
            }
            tracing::debug!(retry, error = %failure, "transient failure, retrying");
            self.counters.retries.fetch_add(1, Ordering::Relaxed);
            std::thread::sleep(self.retry.delay(retry));
            retry += 1;
        }
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<ModelResponse, GatewayError> {
        req.validate()?;
        let hash = request_hash(req);
        let start = Instant::now();
        if let Some(hit) = self.cache.get(&hash) {
            self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(ModelResponse {
                text: hit.text,
                request_hash: hash,
                from_cache: true,
                latency_ms: start.elapsed().as_millis() as u64,
                retries: 0,
                provider_meta: hit.provider_meta,
            });
        }
        let http = self.http_request(req, &hash)?;
        let (body, retries) = self.send_with_retry(req.provider, &http)?;
        let (text, provider_meta) = match req.provider {
            Provider::OpenAICompat => wire::parse_openai(&body),
            Provider::Gemini => wire::parse_gemini(&body),
            Provider::Mock => serde_json::from_str::<Value>(&body)
                .map_err(|e| e.to_string())
                .map(|v| (v["text"].as_str().unwrap_or_default().to_string(), Map::new())),
        }
        .map_err(GatewayError::Malformed)?;
        let entry = CachedEntry { text, provider_meta };
        if let Err(e) = self.cache.put(&hash, &entry) {
            tracing::warn!(error = %e, "could not write cache entry");
        }
        Ok(ModelResponse {
            text: entry.text,
            request_hash: hash,
            from_cache: false,
            latency_ms: start.elapsed().as_millis() as u64,
            retries,
            provider_meta: entry.provider_meta,
        })
    }

    /// Completes every request with at most `parallelism` in flight. The
    /// output is aligned with the input; failures stay in their own slot.
    pub fn complete_batch(
        &self,
        requests: &[CompletionRequest],
        parallelism: usize,
    ) -> Vec<Result<ModelResponse, GatewayError>> {
        let workers = parallelism.max(1).min(requests.len());
        if workers <= 1 {
            return requests.iter().map(|r| self.complete(r)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<ModelResponse, GatewayError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(req) = requests.get(i) else { break };
                    *slots[i].lock().unwrap() = Some(self.complete(req));
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every slot is filled"))
            .collect()
    }

    /// Embedding vector for `text`, cached by a hash of (provider, model, text).
    /// The mock provider uses the local hashed n-gram embedder.
    pub fn embed(&self, provider: Provider, model: &str, text: &str) -> Result<Vec<f64>, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty text".into()));
        }
        let key = hex::encode(Sha256::digest(
            json!({"kind": "embedding", "provider": provider.name(), "model": model, "text": text})
                .to_string()
                .as_bytes(),
        ));
        if let Some(hit) = self.cache.get(&key) {
            if let Ok(v) = serde_json::from_str::<Vec<f64>>(&hit.text) {
                self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(v);
            }
        }
        let vector = match provider {
            Provider::Mock => HashedNgramEmbedder::default()
                .embed(text)
                .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?,
            Provider::Gemini => return Err(GatewayError::Unsupported("embeddings")),
            Provider::OpenAICompat => {
                let key = self
                    .credentials
                    .openai_api_key
                    .as_deref()
                    .ok_or(GatewayError::MissingCredentials("OPENAI_API_KEY"))?;
                let base = self.credentials.openai_base_url.as_deref().unwrap_or(DEFAULT_OPENAI_BASE_URL);
                let http = HttpRequest {
                    url: wire::openai_embeddings_url(base),
                    headers: vec![("Authorization".to_string(), format!("Bearer {key}"))],
                    body: json!({"model": model, "input": text}),
                    timeout: self.timeout,
                };
                let (body, _) = self.send_with_retry(provider, &http)?;
                wire::parse_embedding(&body).map_err(GatewayError::Malformed)?
            }
        };
        let entry = CachedEntry {
            text: serde_json::to_string(&vector).expect("finite floats serialize"),
            provider_meta: Map::new(),
        };
        if let Err(e) = self.cache.put(&key, &entry) {
            tracing::warn!(error = %e, "could not write cache entry");
        }
        Ok(vector)
    }
}

/// [`EmbeddingProvider`] backed by a gateway embeddings endpoint.
pub struct GatewayEmbedder<'a> {
    pub gateway: &'a Gateway,
    pub provider: Provider,
    pub model: String,
}

impl EmbeddingProvider for GatewayEmbedder<'_> {
    fn embed(&self, text: &str) -> Result<Vec<f64>, MetricError> {
        self.gateway
            .embed(self.provider, &self.model, text)
            .map_err(|e| MetricError::EmbedderUnavailable(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Replays a fixed list of outcomes, then 200s; tracks peak concurrency.
    struct Stub {
        script: Mutex<Vec<Result<HttpReply, TransportError>>>,
        in_flight: AtomicUsize,
        peak: AtomicUsize,
        delay: Duration,
    }

    impl Stub {
        fn new(script: Vec<Result<HttpReply, TransportError>>) -> Self {
            Stub {
                script: Mutex::new(script),
                in_flight: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
                delay: Duration::ZERO,
            }
        }
    }

    fn ok_body(text: &str) -> HttpReply {
        HttpReply {
            status: 200,
            body: json!({"choices":[{"message":{"content": text},"finish_reason":"stop"}]}).to_string(),
        }
    }

    fn status(s: u16) -> Result<HttpReply, TransportError> {
        Ok(HttpReply {
            status: s,
            body: String::new(),
        })
    }

    impl Transport for Stub {
        fn send(&self, _: &HttpRequest) -> Result<HttpReply, TransportError> {
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(self.delay);
            let next = {
                let mut s = self.script.lock().unwrap();
                if s.is_empty() {
                    Ok(ok_body("{\"irony\": 1}"))
                } else {
                    s.remove(0)
                }
            };
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            next
        }
    }

    fn live(stub: Arc<Stub>) -> Gateway {
        Gateway::new(ResponseCache::memory())
            .with_transport(stub)
            .with_retry(RetryPolicy::immediate())
            .with_credentials(Credentials {
                openai_api_key: Some("k".into()),
                ..Default::default()
            })
    }

    fn openai(prompt: &str) -> CompletionRequest {
        CompletionRequest::new(Provider::OpenAICompat, "gpt-3.5-turbo", prompt)
    }

    #[test]
    fn defaults_and_validation() {
        let r = CompletionRequest::new(Provider::Mock, "m", "p");
        assert_eq!((r.max_tokens, r.temperature), (300, 0.3));
        let mut bad = r.clone();
        bad.temperature = 2.5;
        assert!(bad.validate().is_err());
        assert!(CompletionRequest::new(Provider::Mock, "m", "  ").validate().is_err());
    }

    #[test]
    fn hash_is_pinned_and_field_sensitive() {
        let r = CompletionRequest::new(Provider::Mock, "m", "p");
        assert_eq!(r.hash(), r.clone().hash());
        assert_eq!(r.hash().len(), 64);
        let mut other = r.clone();
        other.temperature = 0.31;
        assert_ne!(r.hash(), other.hash());
        let mut other = r.clone();
        other.provider = Provider::Gemini;
        assert_ne!(r.hash(), other.hash());
        // pinned so a change in the encoding is caught
        let canonical = r#"{"provider":"mock","model":"m","prompt":"p","max_tokens":300,"temperature":0.3}"#;
        assert_eq!(r.hash(), hex::encode(Sha256::digest(canonical.as_bytes())));
    }

    #[test]
    fn mock_cache_contract() {
        let g = Gateway::mock(MockScript::constant("{\"irony\": 1}"));
        let req = CompletionRequest::new(Provider::Mock, "m", "hello");
        let a = g.complete(&req).unwrap();
        let b = g.complete(&req).unwrap();
        assert_eq!(a.text, "{\"irony\": 1}");
        assert!(!a.from_cache && b.from_cache);
        assert_eq!(a.text, b.text);
        assert_eq!(g.stats().live_calls, 1);
        assert_eq!(g.stats().cache_hits, 1);
    }

    #[test]
    fn retry_after_429() {
        let stub = Arc::new(Stub::new(vec![status(429)]));
        let g = live(stub);
        let r = g.complete(&openai("x")).unwrap();
        assert_eq!(r.retries, 1);
        assert_eq!(r.text, "{\"irony\": 1}");
        assert_eq!(r.provider_meta["finish_reason"], "stop");
        assert_eq!(g.stats().retries, 1);
    }

    #[test]
    fn error_classes() {
        let g = live(Arc::new(Stub::new(vec![status(401)])));
        assert!(matches!(g.complete(&openai("x")), Err(GatewayError::Auth { status: 401, .. })));
        assert_eq!(g.stats().live_calls, 1);

        let g = live(Arc::new(Stub::new(vec![status(400)])));
        assert!(matches!(g.complete(&openai("x")), Err(GatewayError::Provider { status: 400, .. })));

        let g = live(Arc::new(Stub::new(vec![status(429); 4])));
        assert_eq!(g.complete(&openai("x")), Err(GatewayError::RateLimited { attempts: 4 }));

        let timeouts = (0..4).map(|_| Err(TransportError::Timeout)).collect();
        let g = live(Arc::new(Stub::new(timeouts)));
        assert_eq!(g.complete(&openai("x")), Err(GatewayError::Timeout { attempts: 4 }));

        let g = live(Arc::new(Stub::new(vec![status(503), status(500)])));
        assert!(g.complete(&openai("x")).is_ok());
        assert_eq!(g.stats().retries, 2);
    }

    #[test]
    fn missing_credentials() {
        let g = Gateway::new(ResponseCache::memory()).with_credentials(Credentials::default());
        assert_eq!(
            g.complete(&openai("x")),
            Err(GatewayError::MissingCredentials("OPENAI_API_KEY"))
        );
    }

    #[test]
    fn batch_is_ordered_and_bounded() {
        let mut stub = Stub::new(Vec::new());
        stub.delay = Duration::from_millis(15);
        let stub = Arc::new(stub);
        let g = live(stub.clone());
        let reqs: Vec<_> = (0..10).map(|i| openai(&format!("p{i}"))).collect();
        let out = g.complete_batch(&reqs, 3);
        assert_eq!(out.len(), 10);
        for (r, q) in out.iter().zip(&reqs) {
            assert_eq!(r.as_ref().unwrap().request_hash, q.hash());
        }
        let peak = stub.peak.load(Ordering::SeqCst);
        assert!((1..=3).contains(&peak), "peak {peak}");
    }

    #[test]
    fn batch_isolates_failures() {
        let script = MockScript::constant("{\"irony\": 0}").rule(&["p4"], MockReply::Status { status: 400 });
        let g = Gateway::mock(script);
        let reqs: Vec<_> = (0..10)
            .map(|i| CompletionRequest::new(Provider::Mock, "m", format!("p{i}")))
            .collect();
        let out = g.complete_batch(&reqs, 4);
        assert_eq!(out.iter().filter(|r| r.is_ok()).count(), 9);
        assert!(out[4].is_err());
        let seq: Vec<_> = Gateway::mock(MockScript::constant("{\"irony\": 0}"))
            .complete_batch(&reqs, 1)
            .into_iter()
            .map(|r| r.unwrap().text)
            .collect();
        assert_eq!(seq.len(), 10);
    }

    #[test]
    fn unmatched_mock_is_an_error() {
        let g = Gateway::mock(MockScript::default());
        assert_eq!(
            g.complete(&CompletionRequest::new(Provider::Mock, "m", "x")),
            Err(GatewayError::MockUnmatched)
        );
    }

    #[test]
    fn jitter_stays_in_band() {
        let p = RetryPolicy::default();
        for k in 0..3 {
            for _ in 0..50 {
                let d = p.delay(k).as_secs_f64();
                let nominal = 2f64.powi(k as i32);
                assert!(d >= nominal * 0.75 - 1e-9 && d <= nominal * 1.25 + 1e-9);
            }
        }
    }

    #[test]
    fn mock_embeddings_are_cached_and_deterministic() {
        let g = Gateway::mock(MockScript::default());
        let a = g.embed(Provider::Mock, "e", "I love rain").unwrap();
        let b = g.embed(Provider::Mock, "e", "I love rain").unwrap();
        assert_eq!(a, b);
        assert_eq!(g.stats().cache_hits, 1);
    }
}
