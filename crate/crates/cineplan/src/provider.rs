//! Chat-completion providers: scripted mock, record/replay and HTTP.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use cineplan_core::cot::{request_digest, ChatMessage, LlmProvider, ProviderError, Route};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_AUTH_ENV: &str = "CINEPLAN_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Replay,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_model")]
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_auth_env")]
    pub auth_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Default sampling hint for agents that do not set their own.
    #[serde(default)]
    pub sampling: f64,
    /// Mock: directory of routed responses. Replay: directory of `{digest}.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<PathBuf>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// When set, every completion is also stored here as a replay fixture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_to: Option<PathBuf>,
}

fn default_model() -> String {
    "unnamed".into()
}

fn default_auth_env() -> String {
    DEFAULT_AUTH_ENV.into()
}

fn default_timeout() -> u64 {
    120
}

fn default_in_flight() -> usize {
    4
}

impl ProviderConfig {
    pub fn new(kind: ProviderKind) -> Self {
        Self {
            kind,
            endpoint: None,
            model_name: default_model(),
            auth_env: default_auth_env(),
            timeout_secs: default_timeout(),
            sampling: 0.0,
            fixtures: None,
            max_in_flight: default_in_flight(),
            record_to: None,
        }
    }

    pub fn mock(fixtures: impl Into<PathBuf>) -> Self {
        Self { fixtures: Some(fixtures.into()), ..Self::new(ProviderKind::Mock) }
    }

    pub fn replay(fixtures: impl Into<PathBuf>) -> Self {
        Self { fixtures: Some(fixtures.into()), ..Self::new(ProviderKind::Replay) }
    }

    pub fn http(endpoint: impl Into<String>) -> Self {
        Self { endpoint: Some(endpoint.into()), ..Self::new(ProviderKind::Http) }
    }

    pub fn validate(&self) -> Result<(), SetupError> {
        let bad = |m: &str| Err(SetupError::InvalidConfig(m.into()));
        match self.kind {
            ProviderKind::Http => {
                if self.endpoint.as_deref().is_none_or(str::is_empty) {
                    return bad("http provider needs `endpoint`");
                }
                if self.auth_env.is_empty() {
                    return bad("http provider needs `auth_env`");
                }
            }
            ProviderKind::Mock | ProviderKind::Replay => {
                if self.fixtures.is_none() {
                    return bad("mock and replay providers need `fixtures`");
                }
            }
        }
        if !(0.0..=1.0).contains(&self.sampling) {
            return bad("sampling must lie in [0, 1]");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1");
        }
        if self.record_to.is_some() && self.kind != ProviderKind::Http {
            return bad("only http providers can be recorded");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot read fixtures at {path}: {source}")]
    Fixtures { path: PathBuf, source: io::Error },
    #[error("recording sink {path} is not writable: {source}")]
    SinkNotWritable { path: PathBuf, source: io::Error },
    #[error("http client setup failed: {0}")]
    Http(String),
}

/// Responses keyed by route.
///
/// Directory layout: `{agent}/{unit}/{stage}.txt`, optionally
/// `{stage}.a{attempt}.txt` for a specific attempt; a `_any` unit
/// directory answers for units without their own file.
#[derive(Debug, Default)]
pub struct MockProvider {
    responses: BTreeMap<String, String>,
    calls: AtomicUsize,
}

fn route_key(agent: &str, unit: &str, stage: &str, attempt: Option<u32>) -> String {
    match attempt {
        Some(a) => format!("{agent}/{unit}/{stage}.a{a}"),
        None => format!("{agent}/{unit}/{stage}"),
    }
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, route: &Route, attempt_specific: bool, text: impl Into<String>) {
        let key = route_key(
            &route.agent_kind,
            &route.unit,
            route.stage.slug(),
            attempt_specific.then_some(route.attempt),
        );
        self.responses.insert(key, text.into());
    }

    /// Loads every `*.txt` file below `dir`, keyed by its relative path
    /// without the extension.
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        let mut provider = Self::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(current) = stack.pop() {
            for entry in fs::read_dir(&current)? {
                let path = entry?.path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.extension().is_some_and(|e| e == "txt") {
                    let rel = path.strip_prefix(dir).expect("below root").with_extension("");
                    let key = rel
                        .components()
                        .map(|c| c.as_os_str().to_string_lossy())
                        .collect::<Vec<_>>()
                        .join("/");
                    provider.responses.insert(key, fs::read_to_string(&path)?);
                }
            }
        }
        Ok(provider)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn lookup(&self, route: &Route) -> Option<&String> {
        let stage = route.stage.slug();
        let agent = &route.agent_kind;
        [
            route_key(agent, &route.unit, stage, Some(route.attempt)),
            route_key(agent, &route.unit, stage, None),
            route_key(agent, "_any", stage, Some(route.attempt)),
            route_key(agent, "_any", stage, None),
        ]
        .iter()
        .find_map(|k| self.responses.get(k))
    }
}

impl LlmProvider for MockProvider {
    fn complete(&self, messages: &[ChatMessage], _sampling: f64) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let miss = || ProviderError::FixtureMiss(request_digest(messages));
        let route = Route::from_messages(messages).ok_or_else(miss)?;
        self.lookup(&route).cloned().ok_or_else(miss)
    }
}

/// One recorded exchange, stored as `{digest}.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub digest: String,
    pub request: Vec<ChatMessage>,
    pub response: String,
}

/// Answers from recorded exchanges; never touches the network.
#[derive(Debug)]
pub struct ReplayProvider {
    dir: PathBuf,
}

impl ReplayProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl LlmProvider for ReplayProvider {
    fn complete(&self, messages: &[ChatMessage], _sampling: f64) -> Result<String, ProviderError> {
        let digest = request_digest(messages);
        let path = self.dir.join(format!("{digest}.json"));
        let text = fs::read_to_string(&path).map_err(|_| ProviderError::FixtureMiss(digest.clone()))?;
        let exchange: Exchange = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Transport(format!("corrupt fixture {}: {e}", path.display())))?;
        Ok(exchange.response)
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n), cv: Condvar::new() }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.cv.wait_while(self.free.lock().unwrap(), |n| *n == 0).unwrap();
            *free -= 1;
        }
        let out = f();
        *self.free.lock().unwrap() += 1;
        self.cv.notify_one();
        out
    }
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    sampling: f64,
}

/// Accepts `{"content": ...}` or the common
/// `{"choices": [{"message": {"content": ...}}]}` shape.
fn response_text(body: &serde_json::Value) -> Option<String> {
    body.get("content")
        .or_else(|| body.pointer("/choices/0/message/content"))
        .and_then(|v| v.as_str())
        .map(str::to_owned)
}

pub struct HttpProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    token: Option<String>,
    gate: Gate,
}

impl HttpProvider {
    pub fn new(cfg: &ProviderConfig) -> Result<Self, SetupError> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| SetupError::InvalidConfig("http provider needs `endpoint`".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs.max(1)))
            .build()
            .map_err(|e| SetupError::Http(e.to_string()))?;
        Ok(Self {
            client,
            endpoint,
            model: cfg.model_name.clone(),
            token: std::env::var(&cfg.auth_env).ok(),
            gate: Gate::new(cfg.max_in_flight.max(1)),
        })
    }
}

impl LlmProvider for HttpProvider {
    fn complete(&self, messages: &[ChatMessage], sampling: f64) -> Result<String, ProviderError> {
        let body = HttpRequest { model: &self.model, messages, sampling };
        self.gate.run(|| {
            let mut req = self.client.post(&self.endpoint).json(&body);
            if let Some(token) = &self.token {
                req = req.bearer_auth(token);
            }
            let classify = |e: reqwest::Error| {
                if e.is_timeout() {
                    ProviderError::Timeout
                } else {
                    ProviderError::Transport(e.to_string())
                }
            };
            let resp = req.send().map_err(classify)?;
            let status = resp.status();
            if !status.is_success() {
                return Err(ProviderError::Transport(format!("HTTP {status}")));
            }
            let value: serde_json::Value = resp.json().map_err(classify)?;
            response_text(&value)
                .ok_or_else(|| ProviderError::Transport("response has no message content".into()))
        })
    }
}

/// Forwards to an inner provider and stores each successful exchange as a
/// replay fixture.
pub struct RecordingProvider<P> {
    inner: P,
    sink: PathBuf,
}

impl<P: LlmProvider> RecordingProvider<P> {
    pub fn new(inner: P, sink: impl Into<PathBuf>) -> Result<Self, SetupError> {
        let sink = sink.into();
        check_sink(&sink)?;
        Ok(Self { inner, sink })
    }
}

fn check_sink(sink: &Path) -> Result<(), SetupError> {
    let fail = |source| SetupError::SinkNotWritable { path: sink.to_path_buf(), source };
    fs::create_dir_all(sink).map_err(fail)?;
    let probe = sink.join(".write-probe");
    fs::write(&probe, b"").map_err(fail)?;
    fs::remove_file(&probe).map_err(fail)
}

impl<P: LlmProvider> LlmProvider for RecordingProvider<P> {
    fn complete(&self, messages: &[ChatMessage], sampling: f64) -> Result<String, ProviderError> {
        let response = self.inner.complete(messages, sampling)?;
        let exchange = Exchange {
            digest: request_digest(messages),
            request: messages.to_vec(),
            response: response.clone(),
        };
        let path = self.sink.join(format!("{}.json", exchange.digest));
        let mut text = serde_json::to_string_pretty(&exchange).expect("exchange serializes");
        text.push('\n');
        fs::write(&path, text)
            .map_err(|e| ProviderError::Transport(format!("cannot record {}: {e}", path.display())))?;
        Ok(response)
    }
}

/// Returns `cfg` set up to record every completion into `sink`.
pub fn record_session(cfg: &ProviderConfig, sink: impl Into<PathBuf>) -> Result<ProviderConfig, SetupError> {
    if cfg.kind != ProviderKind::Http {
        return Err(SetupError::InvalidConfig("only http providers can be recorded".into()));
    }
    let sink = sink.into();
    check_sink(&sink)?;
    Ok(ProviderConfig { record_to: Some(sink), ..cfg.clone() })
}

/// Instantiates the provider described by `cfg`. Relative fixture and sink
/// paths resolve against `base`.
pub fn build_provider(cfg: &ProviderConfig, base: &Path) -> Result<Arc<dyn LlmProvider + Send + Sync>, SetupError> {
    cfg.validate()?;
    let resolve = |p: &PathBuf| base.join(p);
    Ok(match cfg.kind {
        ProviderKind::Mock => {
            let dir = resolve(cfg.fixtures.as_ref().expect("validated"));
            let mock = MockProvider::from_dir(&dir)
                .map_err(|source| SetupError::Fixtures { path: dir.clone(), source })?;
            Arc::new(mock)
        }
        ProviderKind::Replay => {
            let dir = resolve(cfg.fixtures.as_ref().expect("validated"));
            if !dir.is_dir() {
                return Err(SetupError::Fixtures {
                    path: dir,
                    source: io::Error::new(io::ErrorKind::NotFound, "not a directory"),
                });
            }
            Arc::new(ReplayProvider::new(dir))
        }
        ProviderKind::Http => {
            let http = HttpProvider::new(cfg)?;
            match &cfg.record_to {
                Some(sink) => Arc::new(RecordingProvider::new(http, resolve(sink))?),
                None => Arc::new(http),
            }
        }
    })
}
