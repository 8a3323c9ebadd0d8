//! Chat-completion providers, the retrying client and answer parsing.

mod parse;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::read_json;
use crate::error::{Error, ProviderError, Result};
use crate::prompt::PromptPayload;
use crate::retry::{Fault, RetryPolicy};

pub use parse::{extract_array, extract_object, parse_answer, InvalidKind, Outcome, ParsedAnswer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub temperature: f64,
    pub top_p: Option<f64>,
    pub repetition_penalty: Option<f64>,
    pub seed: Option<u64>,
    pub json_mode: bool,
}

impl DecodeParams {
    /// Temperature 0 with a fixed seed.
    pub fn deterministic() -> DecodeParams {
        DecodeParams {
            temperature: 0.0,
            top_p: None,
            repetition_penalty: None,
            seed: Some(0),
            json_mode: true,
        }
    }

    /// Sampling settings used for the open-weight chat models.
    pub fn llama() -> DecodeParams {
        DecodeParams {
            temperature: 0.3,
            top_p: Some(0.9),
            repetition_penalty: Some(1.0),
            seed: None,
            json_mode: false,
        }
    }

    pub fn preset(name: &str) -> Result<DecodeParams> {
        match name {
            "deterministic" => Ok(DecodeParams::deterministic()),
            "llama" => Ok(DecodeParams::llama()),
            other => Err(Error::Config(format!("unknown decode preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Config(format!(
                "temperature {} must be non-negative",
                self.temperature
            )));
        }
        Ok(())
    }

    fn to_json(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        m.insert("temperature".into(), json!(self.temperature));
        if let Some(v) = self.top_p {
            m.insert("top_p".into(), json!(v));
        }
        if let Some(v) = self.repetition_penalty {
            m.insert("repetition_penalty".into(), json!(v));
        }
        if let Some(v) = self.seed {
            m.insert("seed".into(), json!(v));
        }
        if self.json_mode {
            m.insert("json_mode".into(), json!(true));
        }
        serde_json::Value::Object(m)
    }
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams::deterministic()
    }
}

/// Identifies what a request is for; also the lookup key of the mock.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RequestKey {
    pub interview_id: String,
    /// `var_id`, or `var_id/stage` for Notes sub-requests.
    pub key: String,
}

impl RequestKey {
    pub fn new(interview_id: impl Into<String>, key: impl Into<String>) -> RequestKey {
        RequestKey {
            interview_id: interview_id.into(),
            key: key.into(),
        }
    }
}

impl std::fmt::Display for RequestKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.interview_id, self.key)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub key: RequestKey,
    pub payload: PromptPayload,
    pub params: DecodeParams,
}

impl CompletionRequest {
    /// `{"system", "messages", "params"}`; params are left out for providers
    /// that do not take them.
    pub fn wire(&self, with_params: bool) -> serde_json::Value {
        let mut body = json!({
            "system": self.payload.system,
            "messages": self.payload.messages(),
        });
        if with_params {
            body["params"] = self.params.to_json();
        }
        body
    }
}

pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;

    fn supports_params(&self) -> bool {
        true
    }

    /// One attempt. Transient faults are retried by [`LlmClient`].
    fn call(&self, req: &CompletionRequest, wire: &serde_json::Value) -> Result<String, Fault>;
}

/// Returns canned responses keyed by `interview/key`, then `key`. Unknown
/// keys get an abstaining answer.
#[derive(Debug, Default)]
pub struct MockProvider {
    canned: BTreeMap<String, String>,
    calls: AtomicU64,
}

impl MockProvider {
    pub const FALLBACK: &'static str = r#"{"reason": "no canned response", "answer": "NA"}"#;

    pub fn new(canned: BTreeMap<String, String>) -> MockProvider {
        MockProvider {
            canned,
            calls: AtomicU64::new(0),
        }
    }

    /// Reads `{key: response}`; object or array responses are stored as their
    /// JSON text.
    pub fn load(path: impl AsRef<Path>) -> Result<MockProvider> {
        let raw: BTreeMap<String, serde_json::Value> = read_json(path)?;
        Ok(MockProvider::new(
            raw.into_iter()
                .map(|(k, v)| match v {
                    serde_json::Value::String(s) => (k, s),
                    other => (k, other.to_string()),
                })
                .collect(),
        ))
    }

    pub fn insert(&mut self, key: impl Into<String>, response: impl Into<String>) {
        self.canned.insert(key.into(), response.into());
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn lookup(&self, key: &RequestKey) -> &str {
        self.canned
            .get(&key.to_string())
            .or_else(|| self.canned.get(&key.key))
            .map_or(Self::FALLBACK, String::as_str)
    }
}

impl LlmProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn call(&self, req: &CompletionRequest, _wire: &serde_json::Value) -> Result<String, Fault> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.lookup(&req.key).to_string())
    }
}

/// POSTs the wire request and reads `{"text": ...}`.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    pub url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpProvider {
    /// Takes the bearer token from `LLM_API_KEY`.
    pub fn from_env(url: impl Into<String>, timeout: Duration) -> HttpProvider {
        HttpProvider {
            url: url.into(),
            api_key: std::env::var("LLM_API_KEY").ok(),
            timeout,
        }
    }
}

impl LlmProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn call(&self, _req: &CompletionRequest, wire: &serde_json::Value) -> Result<String, Fault> {
        let v = crate::http::post_json(&self.url, self.api_key.as_deref(), wire, self.timeout)?;
        v.get("text")
            .and_then(|t| t.as_str())
            .map(str::to_string)
            .ok_or_else(|| Fault::permanent("response has no \"text\" field"))
    }
}

/// Token bucket refilled continuously at `per_minute` requests per minute.
#[derive(Debug)]
struct TokenBucket {
    per_minute: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    fn new(per_minute: u32) -> TokenBucket {
        let cap = f64::from(per_minute.max(1));
        TokenBucket {
            per_minute: cap,
            state: Mutex::new((cap, Instant::now())),
        }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().expect("rate limiter poisoned");
                let now = Instant::now();
                let refill = now.duration_since(st.1).as_secs_f64() * self.per_minute / 60.0;
                st.0 = (st.0 + refill).min(self.per_minute);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.0) * 60.0 / self.per_minute)
            };
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug)]
struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Semaphore {
        Semaphore {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientOptions {
    pub retry: RetryPolicy,
    /// Maximum concurrent in-flight requests.
    pub parallelism: usize,
    pub requests_per_minute: Option<u32>,
    /// Payload size limit in characters.
    pub context_budget: Option<usize>,
}

impl Default for ClientOptions {
    fn default() -> Self {
        ClientOptions {
            retry: RetryPolicy::default(),
            parallelism: 4,
            requests_per_minute: None,
            context_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
}

/// A provider wrapped with retries, rate limiting and a concurrency cap.
pub struct LlmClient {
    provider: Arc<dyn LlmProvider>,
    options: ClientOptions,
    limiter: Option<TokenBucket>,
    inflight: Semaphore,
}

impl LlmClient {
    pub fn new(provider: Arc<dyn LlmProvider>, options: ClientOptions) -> LlmClient {
        LlmClient {
            limiter: options.requests_per_minute.map(TokenBucket::new),
            inflight: Semaphore::new(options.parallelism),
            provider,
            options,
        }
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn options(&self) -> &ClientOptions {
        &self.options
    }

    pub fn check_budget(&self, payload: &PromptPayload) -> Result<()> {
        match self.options.context_budget {
            Some(budget) if payload.size() > budget => Err(Error::ContextOverflow {
                size: payload.size(),
                budget,
            }),
            _ => Ok(()),
        }
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<Completion> {
        self.check_budget(&req.payload)?;
        let wire = req.wire(self.provider.supports_params());
        let _permit = self.inflight.acquire();
        let (res, attempts) = self.options.retry.run(|_| {
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            self.provider.call(req, &wire)
        });
        match res {
            Ok(text) => {
                log::info!(
                    "completion request={} provider={} attempts={attempts} response_chars={}",
                    req.key,
                    self.provider.name(),
                    text.len()
                );
                Ok(Completion { text, attempts })
            }
            Err(fault) => {
                log::error!(
                    "completion request={} provider={} attempts={attempts} failed: {}",
                    req.key,
                    self.provider.name(),
                    fault.message
                );
                Err(ProviderError {
                    provider: self.provider.name().to_string(),
                    message: fault.message,
                    attempts,
                }
                .into())
            }
        }
    }
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("provider", &self.provider.name())
            .field("options", &self.options)
            .finish()
    }
}
