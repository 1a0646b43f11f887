//! Chat-completion access: a real OpenAI-compatible HTTP backend, a fixture
//! replay backend, and the [`LlmGateway`] that adds retries, an in-flight
//! cap, transcripts and usage accounting on top of either.

mod http;
mod mock;

use std::fmt;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpBackend, HttpBackendConfig};
pub use mock::{write_fixture, MockBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub step_id: String,
    pub row_key: Option<String>,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl LlmRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.first() {
            None => Err(LlmError::InvalidRequest("no messages".into())),
            Some(m) if m.role != Role::System => Err(LlmError::InvalidRequest(
                "first message must be the system message".into(),
            )),
            _ if !(0.0..=2.0).contains(&self.temperature) => Err(LlmError::InvalidRequest(
                format!("temperature {} outside [0, 2]", self.temperature),
            )),
            _ if self.max_tokens == 0 => {
                Err(LlmError::InvalidRequest("max_tokens must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Row key used for fixture lookup; `default` when the request has none.
    pub fn fixture_key(&self) -> &str {
        self.row_key.as_deref().unwrap_or("default")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    #[serde(default)]
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request: LlmRequest,
    pub response: LlmResponse,
    pub wall_time_ms: u64,
    pub attempt: u32,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend unavailable after {attempts} attempt(s): {last}")]
    BackendUnavailable { attempts: u32, last: String },
    #[error("credential rejected by backend")]
    Credential,
    #[error("output truncated at max_tokens")]
    TruncatedOutput(LlmResponse),
    #[error("no fixture for step {step_id:?} row {row_key:?}")]
    FixtureMissing { step_id: String, row_key: String },
    #[error("unreadable fixture {path}: {reason}")]
    Fixture { path: String, reason: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend rejected request ({status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Failure of a single backend attempt, before retry handling.
#[derive(Debug)]
pub enum AttemptError {
    /// Timeout, connection failure, 429 or 5xx.
    Transient(String),
    Fatal(LlmError),
}

impl fmt::Display for AttemptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttemptError::Transient(msg) => write!(f, "transient: {msg}"),
            AttemptError::Fatal(err) => write!(f, "{err}"),
        }
    }
}

/// A single-attempt chat-completion backend.
pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &LlmRequest) -> Result<LlmResponse, AttemptError>;

    fn model_name(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before attempt `i + 2`; the last entry repeats.
    pub backoff_ms: Vec<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, backoff_ms: vec![1_000, 4_000] }
    }
}

impl RetryPolicy {
    fn delay_before(&self, next_attempt: u32) -> Duration {
        let idx = next_attempt.saturating_sub(2) as usize;
        let ms = self
            .backoff_ms
            .get(idx)
            .or(self.backoff_ms.last())
            .copied()
            .unwrap_or(0);
        Duration::from_millis(ms)
    }
}

/// Counting semaphore bounding concurrent backend calls.
struct InFlight {
    cap: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.cap {
            used = self.freed.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

/// Retrying, accounting front end shared by every LLM step.
#[derive(Clone)]
pub struct LlmGateway {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    in_flight: Arc<InFlight>,
    calls: Arc<AtomicUsize>,
    prompt_tokens: Arc<AtomicU64>,
    completion_tokens: Arc<AtomicU64>,
}

impl fmt::Debug for LlmGateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmGateway")
            .field("model", &self.backend.model_name())
            .field("retry", &self.retry)
            .field("calls", &self.call_count())
            .finish()
    }
}

impl LlmGateway {
    pub const DEFAULT_IN_FLIGHT: usize = 4;

    pub fn new(backend: Arc<dyn ChatBackend>, retry: RetryPolicy, in_flight_cap: usize) -> Self {
        Self {
            backend,
            retry,
            in_flight: Arc::new(InFlight {
                cap: in_flight_cap.max(1),
                used: Mutex::new(0),
                freed: Condvar::new(),
            }),
            calls: Arc::new(AtomicUsize::new(0)),
            prompt_tokens: Arc::new(AtomicU64::new(0)),
            completion_tokens: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn mock(fixture_dir: impl Into<std::path::PathBuf>) -> Result<Self, LlmError> {
        let backend = MockBackend::new(fixture_dir)?;
        Ok(Self::new(Arc::new(backend), RetryPolicy::default(), Self::DEFAULT_IN_FLIGHT))
    }

    pub fn model_name(&self) -> String {
        self.backend.model_name()
    }

    /// Backend attempts issued so far, retries included.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn usage(&self) -> Usage {
        Usage {
            prompt_tokens: self.prompt_tokens.load(Ordering::SeqCst),
            completion_tokens: self.completion_tokens.load(Ordering::SeqCst),
        }
    }

    /// Issue `request`, retrying transient failures. Every attempt is
    /// appended to `transcript`, failed ones with `finish_reason = error`.
    pub fn complete(
        &self,
        request: &LlmRequest,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<LlmResponse, LlmError> {
        request.validate()?;
        let mut attempt = 0;
        loop {
            attempt += 1;
            if attempt > 1 {
                std::thread::sleep(self.retry.delay_before(attempt));
            }
            let started = Instant::now();
            let result = {
                let _slot = self.in_flight.acquire();
                self.calls.fetch_add(1, Ordering::SeqCst);
                self.backend.send(request)
            };
            let wall_time_ms = started.elapsed().as_millis() as u64;
            let logged = match &result {
                Ok(resp) => resp.clone(),
                Err(err) => LlmResponse {
                    content: String::new(),
                    finish_reason: FinishReason::Error,
                    usage: Usage::default(),
                }
                .with_error_note(err),
            };
            transcript.push(TranscriptEntry {
                request: request.clone(),
                response: logged,
                wall_time_ms,
                attempt,
            });
            match result {
                Ok(resp) => {
                    self.prompt_tokens
                        .fetch_add(resp.usage.prompt_tokens, Ordering::SeqCst);
                    self.completion_tokens
                        .fetch_add(resp.usage.completion_tokens, Ordering::SeqCst);
                    return match resp.finish_reason {
                        FinishReason::Length => Err(LlmError::TruncatedOutput(resp)),
                        FinishReason::Error => Err(LlmError::Rejected {
                            status: 200,
                            body: resp.content,
                        }),
                        FinishReason::Stop => Ok(resp),
                    };
                }
                Err(AttemptError::Fatal(err)) => return Err(err),
                Err(AttemptError::Transient(msg)) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(LlmError::BackendUnavailable { attempts: attempt, last: msg });
                    }
                    log::warn!(
                        "{} attempt {attempt} failed ({msg}), retrying",
                        request.step_id
                    );
                }
            }
        }
    }
}

impl LlmResponse {
    fn with_error_note(mut self, err: &AttemptError) -> Self {
        self.content = err.to_string();
        self
    }
}

/// Whitespace-collapsed rendering of the messages, the basis of the
/// hash-keyed fixture lookup.
pub fn normalized_prompt(messages: &[ChatMessage]) -> String {
    let mut joined = String::new();
    for m in messages {
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        joined.push_str(role);
        joined.push(' ');
        joined.push_str(&m.content);
        joined.push(' ');
    }
    joined.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// First 16 hex characters of the SHA-256 of [`normalized_prompt`].
pub fn prompt_fingerprint(messages: &[ChatMessage]) -> String {
    let digest = Sha256::digest(normalized_prompt(messages).as_bytes());
    hex::encode(digest)[..16].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    struct Scripted {
        failures: AtomicU32,
        fail_first: u32,
    }

    impl ChatBackend for Scripted {
        fn send(&self, _request: &LlmRequest) -> Result<LlmResponse, AttemptError> {
            let n = self.failures.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(AttemptError::Transient("503".into()))
            } else {
                Ok(LlmResponse {
                    content: "ok".into(),
                    finish_reason: FinishReason::Stop,
                    usage: Usage { prompt_tokens: 3, completion_tokens: 1 },
                })
            }
        }

        fn model_name(&self) -> String {
            "scripted".into()
        }
    }

    fn request() -> LlmRequest {
        LlmRequest {
            step_id: "severity".into(),
            row_key: Some("HE-0001".into()),
            messages: vec![ChatMessage::system("s"), ChatMessage::user("u")],
            temperature: 0.0,
            max_tokens: 64,
        }
    }

    fn fast() -> RetryPolicy {
        RetryPolicy { max_attempts: 3, backoff_ms: vec![1, 1] }
    }

    #[test]
    fn retries_then_succeeds() {
        let gw = LlmGateway::new(
            Arc::new(Scripted { failures: AtomicU32::new(0), fail_first: 2 }),
            fast(),
            1,
        );
        let mut log = Vec::new();
        let resp = gw.complete(&request(), &mut log).unwrap();
        assert_eq!(resp.content, "ok");
        assert_eq!(log.len(), 3);
        assert_eq!(log.last().unwrap().attempt, 3);
        assert_eq!(gw.call_count(), 3);
        assert_eq!(gw.usage().prompt_tokens, 3);
    }

    #[test]
    fn exhausts_retries() {
        let gw = LlmGateway::new(
            Arc::new(Scripted { failures: AtomicU32::new(0), fail_first: 10 }),
            fast(),
            1,
        );
        let mut log = Vec::new();
        let err = gw.complete(&request(), &mut log).unwrap_err();
        assert!(matches!(err, LlmError::BackendUnavailable { attempts: 3, .. }));
        assert_eq!(log.len(), 3);
        assert!(log.iter().all(|e| e.response.finish_reason == FinishReason::Error));
    }

    #[test]
    fn request_validation() {
        let mut req = request();
        req.messages.remove(0);
        let gw = LlmGateway::new(
            Arc::new(Scripted { failures: AtomicU32::new(0), fail_first: 0 }),
            fast(),
            1,
        );
        assert!(matches!(
            gw.complete(&req, &mut Vec::new()),
            Err(LlmError::InvalidRequest(_))
        ));
        req.messages.clear();
        assert!(req.validate().is_err());
    }

    #[test]
    fn default_backoff() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_before(2), Duration::from_secs(1));
        assert_eq!(p.delay_before(3), Duration::from_secs(4));
    }

    #[test]
    fn fingerprint_ignores_whitespace_layout() {
        let a = vec![ChatMessage::system("a  b\n c"), ChatMessage::user("d")];
        let b = vec![ChatMessage::system("a b c"), ChatMessage::user(" d ")];
        assert_eq!(prompt_fingerprint(&a), prompt_fingerprint(&b));
        assert_eq!(prompt_fingerprint(&a).len(), 16);
    }
}
