//! Judge backends, the response cache, and reply parsing.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::InputMode;

/// Environment variable holding the judge API key.
pub const API_KEY_ENV: &str = "MIR_JUDGE_API_KEY";
/// Environment variable overriding the cache directory.
pub const CACHE_DIR_ENV: &str = "MIR_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub text: String,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

pub trait JudgeBackend: Send + Sync {
    fn complete(&self, request: &JudgeRequest) -> Result<JudgeResponse, BackendError>;
}

/// Posts the request as JSON and reads a [`JudgeResponse`] JSON body.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            api_key,
            agent,
        }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self::new(endpoint, std::env::var(API_KEY_ENV).ok(), timeout)
    }
}

impl JudgeBackend for HttpBackend {
    fn complete(&self, request: &JudgeRequest) -> Result<JudgeResponse, BackendError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(request).map_err(|e| match e {
            ureq::Error::StatusCode(code) => BackendError::Status(code),
            other => BackendError::Transport(other.to_string()),
        })?;
        resp.body_mut()
            .read_json::<JudgeResponse>()
            .map_err(|e| BackendError::Malformed(e.to_string()))
    }
}

/// Backend for cache-only runs: every call fails as unreachable.
pub struct OfflineBackend;

impl JudgeBackend for OfflineBackend {
    fn complete(&self, _request: &JudgeRequest) -> Result<JudgeResponse, BackendError> {
        Err(BackendError::Transport("no judge endpoint configured".into()))
    }
}

/// Content-addressed on-disk store of parseable judge responses.
#[derive(Debug, Clone)]
pub struct JudgeCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    model_id: String,
    input_mode: InputMode,
    temperature: f64,
    prompt: String,
    response: JudgeResponse,
}

pub fn cache_key(model_id: &str, prompt: &str, temperature: f64, input_mode: InputMode) -> String {
    let mut h = Sha256::new();
    for part in [
        model_id.as_bytes(),
        prompt.as_bytes(),
        &temperature.to_bits().to_le_bytes(),
        input_mode.as_str().as_bytes(),
    ] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    hex::encode(h.finalize())
}

impl JudgeCache {
    pub fn new(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<JudgeResponse> {
        let bytes = fs::read(self.path(key)).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&bytes).ok()?;
        (entry.key == key).then_some(entry.response)
    }

    /// Write-then-rename so concurrent readers never see a partial file.
    fn put(&self, key: &str, entry: &CacheEntry) -> std::io::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer_pretty(&mut tmp, entry)?;
        tmp.write_all(b"\n")?;
        tmp.persist(self.path(key)).map_err(|e| e.error)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Transport retries after the first attempt.
    pub transport_retries: u32,
    /// Backend responses tried before a reply is declared unparseable.
    pub parse_attempts: u32,
    /// First backoff delay; doubles on every retry.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            transport_retries: 3,
            parse_attempts: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub backend_calls: u64,
    pub cache_hits: u64,
    /// Judge calls (one per prompt), whatever their outcome.
    pub calls: u64,
    /// Judge calls that never reached the backend successfully.
    pub unreachable: u64,
    pub unparseable: u64,
}

impl CostReport {
    /// Share of judge calls answered from the cache.
    pub fn cache_hit_ratio(&self) -> f64 {
        if self.calls == 0 {
            0.0
        } else {
            self.cache_hits as f64 / self.calls as f64
        }
    }
}

#[derive(Default)]
struct Counters {
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
    calls: AtomicU64,
    unreachable: AtomicU64,
    unparseable: AtomicU64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CallOutcome<T> {
    Parsed { value: T, text: String },
    Unparseable { text: String },
    Unreachable { error: String },
}

impl<T> CallOutcome<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            CallOutcome::Parsed { value, .. } => Some(value),
            _ => None,
        }
    }

    /// Last raw reply, or the transport error.
    pub fn transcript(&self) -> &str {
        match self {
            CallOutcome::Parsed { text, .. } | CallOutcome::Unparseable { text } => text,
            CallOutcome::Unreachable { error } => error,
        }
    }
}

/// Cache, retries and cost accounting in front of a backend.
pub struct JudgeClient<'a> {
    backend: &'a dyn JudgeBackend,
    cache: Option<JudgeCache>,
    model_id: String,
    temperature: f64,
    max_tokens: u32,
    input_mode: InputMode,
    retry: RetryPolicy,
    counters: Counters,
}

impl<'a> JudgeClient<'a> {
    pub fn new(
        backend: &'a dyn JudgeBackend,
        cache: Option<JudgeCache>,
        model_id: impl Into<String>,
        temperature: f64,
        max_tokens: u32,
        input_mode: InputMode,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            backend,
            cache,
            model_id: model_id.into(),
            temperature,
            max_tokens,
            input_mode,
            retry,
            counters: Counters::default(),
        }
    }

    pub fn cost(&self) -> CostReport {
        let c = &self.counters;
        CostReport {
            prompt_tokens: c.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: c.completion_tokens.load(Ordering::Relaxed),
            backend_calls: c.backend_calls.load(Ordering::Relaxed),
            cache_hits: c.cache_hits.load(Ordering::Relaxed),
            calls: c.calls.load(Ordering::Relaxed),
            unreachable: c.unreachable.load(Ordering::Relaxed),
            unparseable: c.unparseable.load(Ordering::Relaxed),
        }
    }

    fn send(&self, prompt: &str) -> Result<JudgeResponse, BackendError> {
        let request = JudgeRequest {
            model_id: self.model_id.clone(),
            messages: vec![Message {
                role: "user".into(),
                text: prompt.to_owned(),
            }],
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        let mut delay = Duration::from_millis(self.retry.backoff_ms);
        let mut attempt = 0;
        loop {
            self.counters.backend_calls.fetch_add(1, Ordering::Relaxed);
            match self.backend.complete(&request) {
                Ok(resp) => {
                    self.counters.prompt_tokens.fetch_add(resp.prompt_tokens, Ordering::Relaxed);
                    self.counters
                        .completion_tokens
                        .fetch_add(resp.completion_tokens, Ordering::Relaxed);
                    return Ok(resp);
                }
                Err(e) if attempt < self.retry.transport_retries => {
                    log::warn!("judge backend attempt {} failed: {e}", attempt + 1);
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Asks one prompt. A cached reply is used when present; otherwise the
    /// backend is queried until `parse` accepts a reply or the attempts run
    /// out. Only accepted replies are cached.
    pub fn ask<T>(&self, prompt: &str, parse: impl Fn(&str) -> Option<T>) -> CallOutcome<T> {
        self.counters.calls.fetch_add(1, Ordering::Relaxed);
        let key = cache_key(&self.model_id, prompt, self.temperature, self.input_mode);
        if let Some(cached) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            if let Some(value) = parse(&cached.text) {
                self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
                return CallOutcome::Parsed {
                    value,
                    text: cached.text,
                };
            }
        }
        let mut last_text = String::new();
        for _ in 0..self.retry.parse_attempts.max(1) {
            let resp = match self.send(prompt) {
                Ok(r) => r,
                Err(e) => {
                    self.counters.unreachable.fetch_add(1, Ordering::Relaxed);
                    return CallOutcome::Unreachable { error: e.to_string() };
                }
            };
            if let Some(value) = parse(&resp.text) {
                if let Some(cache) = &self.cache {
                    let entry = CacheEntry {
                        key: key.clone(),
                        model_id: self.model_id.clone(),
                        input_mode: self.input_mode,
                        temperature: self.temperature,
                        prompt: prompt.to_owned(),
                        response: resp.clone(),
                    };
                    if let Err(e) = cache.put(&key, &entry) {
                        log::warn!("could not write judge cache entry {key}: {e}");
                    }
                }
                return CallOutcome::Parsed { value, text: resp.text };
            }
            log::debug!("unparseable judge reply: {:?}", resp.text);
            last_text = resp.text;
        }
        self.counters.unparseable.fetch_add(1, Ordering::Relaxed);
        CallOutcome::Unparseable { text: last_text }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawScores {
    pub problem_proximity_score: f64,
    pub methodological_utility_score: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseReply {
    pub relevant: bool,
    pub raw_scores: Option<RawScores>,
    pub reasoning: String,
}

fn strip_fences(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn json_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    let text = strip_fences(text);
    let body = &text[text.find('{')?..=text.rfind('}')?];
    let parse = |s: &str| serde_json::from_str::<Value>(s).ok();
    let value = parse(body).or_else(|| {
        // replies sometimes echo the template's doubled braces
        let inner = body.strip_prefix('{')?.strip_suffix('}')?;
        parse(inner.trim())
    })?;
    match value {
        Value::Object(map) => Some(map),
        _ => None,
    }
}

fn unit_score(v: Option<&Value>) -> Option<f64> {
    let x = match v? {
        Value::Number(n) => n.as_f64()?,
        Value::String(s) => s.trim().parse().ok()?,
        _ => return None,
    };
    (0.0..=1.0).contains(&x).then_some(x)
}

/// Parses a pointwise reply: one JSON object whose `relevance_score` is 0 or 1.
pub fn parse_pointwise(text: &str) -> Option<PointwiseReply> {
    let obj = json_object(text)?;
    let relevant = match obj.get("relevance_score")? {
        Value::Number(n) => match n.as_f64()? {
            x if x == 1.0 => true,
            x if x == 0.0 => false,
            _ => return None,
        },
        Value::String(s) => match s.trim() {
            "1" => true,
            "0" => false,
            _ => return None,
        },
        _ => return None,
    };
    let raw_scores = match (
        unit_score(obj.get("problem_proximity_score")),
        unit_score(obj.get("methodological_utility_score")),
        unit_score(obj.get("confidence")),
    ) {
        (Some(p), Some(m), Some(c)) => Some(RawScores {
            problem_proximity_score: p,
            methodological_utility_score: m,
            confidence: c,
        }),
        _ => None,
    };
    let reasoning = match obj.get("reasoning") {
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => String::new(),
    };
    Some(PointwiseReply {
        relevant,
        raw_scores,
        reasoning,
    })
}

/// Parses a final agent verdict: `Yes` or `No`, ignoring case, braces,
/// quotes, emphasis and trailing punctuation.
pub fn parse_verdict(text: &str) -> Option<bool> {
    let word = text
        .trim()
        .trim_matches(|c: char| c.is_whitespace() || "{}\"'*`".contains(c))
        .trim_end_matches(|c: char| ".!,;:".contains(c))
        .trim_matches(|c: char| c.is_whitespace() || "{}\"'*`".contains(c));
    if word.eq_ignore_ascii_case("yes") {
        Some(true)
    } else if word.eq_ignore_ascii_case("no") {
        Some(false)
    } else {
        None
    }
}

/// Any non-empty reply is a usable analysis.
pub fn parse_analysis(text: &str) -> Option<String> {
    let t = text.trim();
    (!t.is_empty()).then(|| t.to_owned())
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn pointwise_replies() {
        let r = parse_pointwise(r#"{"relevance_score": 1, "reasoning": "fits"}"#).unwrap();
        assert!(r.relevant);
        assert_eq!(r.reasoning, "fits");
        assert_eq!(r.raw_scores, None);
        assert!(!parse_pointwise(r#"{"relevance_score": 0}"#).unwrap().relevant);

        let fenced = "```json\n{\n \"problem_proximity_score\": 0.6,\n \"methodological_utility_score\": 0.4,\n \"confidence\": 0.7,\n \"reasoning\": \"x\",\n \"relevance_score\": 1\n}\n```";
        let r = parse_pointwise(fenced).unwrap();
        assert_eq!(r.raw_scores.unwrap().confidence, 0.7);

        assert!(parse_pointwise("{{\"relevance_score\": 1}}").unwrap().relevant);
        assert!(parse_pointwise("Sure! {\"relevance_score\": \"0\"} hope this helps").is_some());
        let out_of_range = r#"{"relevance_score": 1, "problem_proximity_score": 1.5, "methodological_utility_score": 0.4, "confidence": 0.7}"#;
        assert_eq!(parse_pointwise(out_of_range).unwrap().raw_scores, None);
    }

    #[test]
    fn pointwise_rejects() {
        for bad in ["", "yes", "{}", r#"{"relevance_score": 2}"#, r#"{"relevance_score": 0.5}"#, "[1]", "{not json}"] {
            assert_eq!(parse_pointwise(bad), None, "{bad}");
        }
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("{{Yes}}"), Some(true));
        assert_eq!(parse_verdict("no."), Some(false));
        assert_eq!(parse_verdict("  **YES**\n"), Some(true));
        assert_eq!(parse_verdict("\"No\""), Some(false));
        assert_eq!(parse_verdict("Yes, because"), None);
        assert_eq!(parse_verdict("maybe"), None);
        assert_eq!(parse_verdict(""), None);
    }

    #[test]
    fn cache_key_depends_on_every_field() {
        let base = cache_key("m", "p", 0.0, InputMode::Abstract);
        assert_ne!(base, cache_key("m2", "p", 0.0, InputMode::Abstract));
        assert_ne!(base, cache_key("m", "p2", 0.0, InputMode::Abstract));
        assert_ne!(base, cache_key("m", "p", 0.5, InputMode::Abstract));
        assert_ne!(base, cache_key("m", "p", 0.0, InputMode::FullPaper));
        assert_eq!(base, cache_key("m", "p", 0.0, InputMode::Abstract));
    }

    #[test]
    fn cached_replies_skip_the_backend() {
        let dir = tempfile::tempdir().unwrap();
        let backend = FnBackend::new(|_| Ok("{\"relevance_score\": 1}".to_string()));
        let client = || {
            JudgeClient::new(&backend, Some(JudgeCache::new(dir.path()).unwrap()), "m", 0.0, 64, InputMode::Abstract, fast_retry())
        };
        let first = client();
        assert!(first.ask("prompt", parse_pointwise).value().unwrap().relevant);
        assert_eq!(backend.calls(), 1);
        let second = client();
        assert!(second.ask("prompt", parse_pointwise).value().unwrap().relevant);
        assert_eq!(backend.calls(), 1);
        assert_eq!(second.cost().cache_hits, 1);
        assert_eq!(second.cost().backend_calls, 0);
    }

    #[test]
    fn unparseable_replies_retry_then_give_up_uncached() {
        let dir = tempfile::tempdir().unwrap();
        let backend = FnBackend::new(|_| Ok("I think so".to_string()));
        let client = JudgeClient::new(&backend, Some(JudgeCache::new(dir.path()).unwrap()), "m", 0.0, 64, InputMode::Abstract, fast_retry());
        assert!(matches!(client.ask("p", parse_pointwise), CallOutcome::Unparseable { .. }));
        assert_eq!(backend.calls(), 3);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
        assert_eq!(client.cost().unparseable, 1);
    }

    #[test]
    fn transport_failures_retry_then_report_unreachable() {
        let backend = FnBackend::new(|_| Err(BackendError::Transport("down".into())));
        let client = JudgeClient::new(&backend, None, "m", 0.0, 64, InputMode::Abstract, fast_retry());
        assert!(matches!(client.ask("p", parse_verdict), CallOutcome::Unreachable { .. }));
        assert_eq!(backend.calls(), 4);
        assert_eq!(client.cost().unreachable, 1);
    }

    #[test]
    fn transient_failure_recovers() {
        let n = AtomicU64::new(0);
        let backend = FnBackend::new(move |_| {
            if n.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(BackendError::Status(503))
            } else {
                Ok("Yes".into())
            }
        });
        let client = JudgeClient::new(&backend, None, "m", 0.0, 64, InputMode::Abstract, fast_retry());
        assert_eq!(client.ask("p", parse_verdict).value(), Some(&true));
        assert_eq!(client.cost().backend_calls, 3);
    }

    #[test]
    fn http_backend_reports_transport_errors() {
        // nothing listens on port 9 of the loopback interface
        let backend = HttpBackend::new("http://127.0.0.1:9/v1/judge", None, Duration::from_millis(500));
        let req = JudgeRequest {
            model_id: "m".into(),
            messages: vec![],
            temperature: 0.0,
            max_tokens: 1,
        };
        assert!(backend.complete(&req).is_err());
    }
}
