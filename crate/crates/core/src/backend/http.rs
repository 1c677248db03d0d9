//! OpenAI-compatible chat completions over HTTP.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendError, Generation, GenerationRequest};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "SPANLAB_API_KEY";

#[derive(Clone, Debug, PartialEq)]
pub struct HttpConfig {
    /// Base URL up to and including the version segment, e.g.
    /// `https://api.example.com/v1`.
    pub endpoint: String,
    pub model: String,
    pub timeout: Duration,
    /// Retries after a connection failure, 429 or 5xx response.
    pub max_retries: u32,
    /// Delay before the first retry; doubled on each further one.
    pub backoff: Duration,
    /// Requests in flight at once.
    pub max_concurrency: usize,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            max_concurrency: 4,
        }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.endpoint.trim_end_matches('/'))
    }
}

// counting semaphore bounding requests in flight
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    freed: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.freed.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    slots: Slots,
}

enum Attempt {
    Done(Result<Generation, BackendError>),
    Retry(String),
}

impl HttpBackend {
    pub fn new(config: HttpConfig, api_key: Option<String>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let slots = Slots {
            free: Mutex::new(config.max_concurrency.max(1)),
            freed: Condvar::new(),
        };
        Ok(Self {
            config,
            api_key,
            client,
            slots,
        })
    }

    /// Reads the token from [`API_KEY_ENV`]; a missing variable means no
    /// `Authorization` header.
    pub fn from_env(config: HttpConfig) -> Result<Self, BackendError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(config, key)
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn body(&self, request: &GenerationRequest) -> Value {
        let d = &request.decoding;
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt.text}],
            "temperature": d.temperature,
            "top_p": d.top_p,
            "max_tokens": d.max_tokens,
            "seed": d.seed,
        });
        if let Some(k) = d.top_k {
            body["top_k"] = json!(k);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut req = self.client.post(self.config.url()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Attempt::Done(Err(BackendError::Transport(format!("HTTP {status}: {}", text.trim()))));
        }
        Attempt::Done(
            response
                .json::<Value>()
                .map_err(|e| BackendError::Transport(format!("malformed response: {e}")))
                .and_then(|v| read_completion(&v)),
        )
    }
}

fn read_completion(v: &Value) -> Result<Generation, BackendError> {
    let choice = v
        .pointer("/choices/0")
        .ok_or_else(|| BackendError::Transport("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Transport("response has no message content".into()))?;
    let truncated = choice.get("finish_reason").and_then(Value::as_str) == Some("length");
    let token_count = v
        .pointer("/usage/completion_tokens")
        .and_then(Value::as_u64)
        .unwrap_or(0) as usize;
    Ok(Generation {
        output_text: text.to_string(),
        tokens: Vec::new(),
        token_count,
        truncated,
        trace: Vec::new(),
    })
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn supports_masks(&self) -> bool {
        false
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Generation, BackendError> {
        super::check_request(self, request)?;
        let body = self.body(request);
        let _slot = self.slots.acquire();
        let mut delay = self.config.backoff;
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&body) {
                Attempt::Done(result) => return result,
                Attempt::Retry(reason) => last = reason,
            }
        }
        Err(BackendError::Transport(format!(
            "gave up after {} attempts: {last}",
            self.config.max_retries + 1
        )))
    }
}
