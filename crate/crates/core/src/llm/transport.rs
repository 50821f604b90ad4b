//! Completion transports: a live HTTP client for OpenAI-style
//! chat-completions endpoints, a transcript replayer for bit-reproducible
//! reruns, and offline stand-ins for tests and dry runs.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use once_cell::sync::Lazy;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::parse::render_answer;
use super::prompt::PromptBundle;
use crate::events::LlmExchange;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// The JSON body POSTed to a chat-completions endpoint. Field order is fixed
/// by this struct, which makes the serialized bytes — and therefore the
/// request hash — canonical.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_k: u32,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(params: &super::LlmParams, bundle: &PromptBundle) -> Self {
        CompletionRequest {
            model: params.model.clone(),
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: bundle.system.clone(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: bundle.user.clone(),
                },
            ],
            temperature: params.temperature,
            top_k: params.top_k,
            max_tokens: params.max_tokens,
        }
    }

    /// Hex SHA-256 of the canonical serialization; the fingerprint stored in
    /// event logs and matched by the replay transport.
    pub fn sha256_hex(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serialization is infallible");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("quota or rate limit exhausted (HTTP {0})")]
    Quota(u16),
    #[error("server error after retries (HTTP {status}): {body}")]
    Http { status: u16, body: String },
    #[error("network failure: {0}")]
    Network(String),
    #[error("malformed completion payload: {0}")]
    Payload(String),
    #[error("missing API key: environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("replay transcript exhausted at position {position}")]
    ReplayExhausted { position: usize },
    #[error("replay mismatch at position {position}: recorded request {recorded}…, got {actual}…")]
    ReplayMismatch {
        position: usize,
        recorded: String,
        actual: String,
    },
    #[error("transcript {path}: {message}")]
    Transcript { path: String, message: String },
    #[error("scripted responses exhausted after {0}")]
    ScriptExhausted(usize),
}

/// A completion backend. Implementations must be shareable across the worker
/// pool; stateful ones guard their cursors internally.
pub trait Transport: Send + Sync {
    /// Returns the assistant's text for one request.
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError>;
}

// ---------------------------------------------------------------------------
// Live HTTP transport.

/// POSTs requests to an OpenAI-style `/chat/completions` endpoint with bearer
/// auth. Transient failures (timeouts, 429, 5xx) are retried with exponential
/// backoff; auth failures are surfaced immediately.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
    /// Minimum spacing between requests, from the requests-per-minute cap.
    min_interval: Option<Duration>,
    last_request: Mutex<Option<Instant>>,
    transient_retries: u32,
    backoff_base: Duration,
}

impl HttpTransport {
    /// Builds a live transport, reading the key from `api_key_env`.
    pub fn new(
        endpoint: &str,
        api_key_env: &str,
        requests_per_minute: Option<u32>,
    ) -> Result<Self, TransportError> {
        let api_key = std::env::var(api_key_env)
            .map_err(|_| TransportError::MissingApiKey(api_key_env.to_owned()))?;
        Ok(Self::with_api_key(endpoint, &api_key, requests_per_minute))
    }

    pub fn with_api_key(endpoint: &str, api_key: &str, requests_per_minute: Option<u32>) -> Self {
        HttpTransport {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("default TLS client"),
            endpoint: endpoint.to_owned(),
            api_key: api_key.to_owned(),
            min_interval: requests_per_minute
                .map(|rpm| Duration::from_secs_f64(60.0 / rpm.max(1) as f64)),
            last_request: Mutex::new(None),
            transient_retries: 3,
            backoff_base: Duration::from_millis(500),
        }
    }

    /// Shrinks retry spacing; tests exercising the backoff path use this to
    /// avoid real sleeps.
    pub fn with_backoff(mut self, retries: u32, base: Duration) -> Self {
        self.transient_retries = retries;
        self.backoff_base = base;
        self
    }

    fn respect_rate_limit(&self) {
        let Some(interval) = self.min_interval else {
            return;
        };
        let mut last = self.last_request.lock().expect("rate-limit lock");
        if let Some(at) = *last {
            let elapsed = at.elapsed();
            if elapsed < interval {
                std::thread::sleep(interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn extract_content(body: &str) -> Result<String, TransportError> {
        let value: serde_json::Value = serde_json::from_str(body)
            .map_err(|e| TransportError::Payload(format!("not JSON: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| {
                TransportError::Payload("no choices[0].message.content string".into())
            })
    }
}

impl Transport for HttpTransport {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        let mut last_error = None;
        for attempt in 0..=self.transient_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
            }
            self.respect_rate_limit();
            let sent = self
                .client
                .post(&self.endpoint)
                .bearer_auth(&self.api_key)
                .json(request)
                .send();
            let response = match sent {
                Ok(r) => r,
                Err(e) => {
                    last_error = Some(TransportError::Network(e.to_string()));
                    continue;
                }
            };
            let status = response.status().as_u16();
            let body = response.text().unwrap_or_default();
            match status {
                200 => return Self::extract_content(&body),
                401 | 403 => return Err(TransportError::Auth(status)),
                429 => last_error = Some(TransportError::Quota(status)),
                500..=599 => last_error = Some(TransportError::Http { status, body }),
                _ => return Err(TransportError::Http { status, body }),
            }
        }
        Err(last_error.expect("at least one attempt"))
    }
}

// ---------------------------------------------------------------------------
// Replay transport.

/// Replays a recorded transcript in order, verifying that each incoming
/// request hashes to what was recorded. Any drift — different prompt bytes,
/// different call order, one call too many — is an error, which is what makes
/// replayed trials trustworthy.
pub struct ReplayTransport {
    entries: Vec<LlmExchange>,
    cursor: Mutex<usize>,
}

impl ReplayTransport {
    pub fn from_entries(entries: Vec<LlmExchange>) -> Self {
        ReplayTransport {
            entries,
            cursor: Mutex::new(0),
        }
    }

    /// Loads a JSONL transcript (one `LlmExchange` per line).
    pub fn from_path(path: &Path) -> Result<Self, TransportError> {
        let display = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| TransportError::Transcript {
            path: display.clone(),
            message: e.to_string(),
        })?;
        let mut entries = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| TransportError::Transcript {
                path: display.clone(),
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LlmExchange =
                serde_json::from_str(&line).map_err(|e| TransportError::Transcript {
                    path: display.clone(),
                    message: format!("line {}: {e}", idx + 1),
                })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    /// Number of entries not yet consumed.
    pub fn remaining(&self) -> usize {
        self.entries.len() - *self.cursor.lock().expect("cursor lock")
    }
}

/// Writes a transcript consumable by `ReplayTransport::from_path`.
pub fn write_transcript<W: Write>(writer: &mut W, entries: &[LlmExchange]) -> std::io::Result<()> {
    for entry in entries {
        serde_json::to_writer(&mut *writer, entry)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

impl Transport for ReplayTransport {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        let mut cursor = self.cursor.lock().expect("cursor lock");
        let position = *cursor;
        let entry = self
            .entries
            .get(position)
            .ok_or(TransportError::ReplayExhausted { position })?;
        let actual = request.sha256_hex();
        if entry.request_sha256 != actual {
            return Err(TransportError::ReplayMismatch {
                position,
                recorded: entry.request_sha256.chars().take(12).collect(),
                actual: actual.chars().take(12).collect(),
            });
        }
        *cursor += 1;
        Ok(entry.response.clone())
    }
}

// ---------------------------------------------------------------------------
// Offline transports.

static VALUE_LIST: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"following values: \[([^\]]+)\]").expect("static regex"));

/// Offline stand-in for a live model: reads the option list out of the prompt
/// and answers with a uniform draw, well-formed. Deterministic given its seed
/// and call order.
pub struct MockTransport {
    rng: Mutex<ChaCha8Rng>,
}

impl MockTransport {
    pub fn new(seed: u64) -> Self {
        MockTransport {
            rng: Mutex::new(seeds::stream(seed, &[seeds::tag::MOCK])),
        }
    }
}

impl Transport for MockTransport {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        let system = request
            .messages
            .first()
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        let captures = VALUE_LIST.captures(system).ok_or_else(|| {
            TransportError::Payload("prompt carries no option list to mock from".into())
        })?;
        let options: Vec<&str> = captures[1].split(", ").collect();
        let mut rng = self.rng.lock().expect("mock rng lock");
        let pick = options.choose(&mut *rng).expect("non-empty option list");
        let name = crate::types::Name::new(*pick)
            .map_err(|e| TransportError::Payload(format!("unparseable option: {e}")))?;
        Ok(render_answer(&name, "mock"))
    }
}

/// Returns canned responses in order; for tests.
pub struct ScriptedTransport {
    responses: Mutex<VecDeque<String>>,
    served: Mutex<usize>,
}

impl ScriptedTransport {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        ScriptedTransport {
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
            served: Mutex::new(0),
        }
    }
}

impl Transport for ScriptedTransport {
    fn complete(&self, _request: &CompletionRequest) -> Result<String, TransportError> {
        let mut responses = self.responses.lock().expect("script lock");
        let mut served = self.served.lock().expect("served lock");
        match responses.pop_front() {
            Some(r) => {
                *served += 1;
                Ok(r)
            }
            None => Err(TransportError::ScriptExhausted(*served)),
        }
    }
}

/// Wraps a closure as a transport; for request-dependent test responders.
pub struct FnTransport<F>(pub F);

impl<F> Transport for FnTransport<F>
where
    F: Fn(&CompletionRequest) -> Result<String, TransportError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        (self.0)(request)
    }
}
