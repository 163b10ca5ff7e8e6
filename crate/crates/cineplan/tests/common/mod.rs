#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use cineplan::config::{load_config, LoadedConfig, Overrides};
use cineplan::pipeline::{scan_statuses, Planner, ShotState};
use cineplan::provider::MockProvider;
use cineplan_core::cot::{ChatMessage, FrozenClock, LlmProvider, TemplateSet};
use cineplan_core::media::ArtifactRole;
use cineplan_core::model::MoviePlan;

pub fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo")
}

pub fn golden_plan() -> PathBuf {
    demo_dir().join("golden/plan.json")
}

pub fn echo_renderer() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_cineplan-echo-renderer"))
}

/// Copies the demo inputs and configs into `dest/demo`.
pub fn copy_demo(dest: &Path) -> PathBuf {
    fn copy(from: &Path, to: &Path) {
        std::fs::create_dir_all(to).unwrap();
        for entry in std::fs::read_dir(from).unwrap() {
            let entry = entry.unwrap();
            let name = entry.file_name();
            if name == "out" {
                continue;
            }
            let target = to.join(&name);
            if entry.file_type().unwrap().is_dir() {
                copy(&entry.path(), &target);
            } else {
                std::fs::copy(entry.path(), target).unwrap();
            }
        }
    }
    let to = dest.join("demo");
    copy(&demo_dir(), &to);
    to
}

/// The demo job with its output redirected to `job_dir`.
pub fn demo_config(joint: bool, job_dir: &Path) -> LoadedConfig {
    let file = if joint { "joint.toml" } else { "cineplan.toml" };
    let overrides = Overrides { job_dir: Some(job_dir.to_path_buf()), ..Overrides::default() };
    load_config(&demo_dir().join(file), &overrides).expect("demo config loads")
}

pub fn fixture_provider() -> MockProvider {
    MockProvider::from_dir(&demo_dir().join("agents")).expect("fixtures load")
}

pub struct PlannerParts {
    pub provider: MockProvider,
    pub templates: TemplateSet,
}

impl PlannerParts {
    pub fn new() -> Self {
        Self { provider: fixture_provider(), templates: TemplateSet::builtin() }
    }

    pub fn planner(&self) -> Planner<'_> {
        Planner { provider: &self.provider, templates: &self.templates, clock: &FrozenClock }
    }
}

/// `(shot_id, role, checksum)` for every artifact of every done shot, in
/// playback order.
pub fn artifact_checksums(job_dir: &Path, plan: &MoviePlan) -> Vec<(String, ArtifactRole, String)> {
    let mut out = Vec::new();
    for status in scan_statuses(job_dir, plan).unwrap() {
        assert_eq!(status.state, ShotState::Done, "{}", status.shot_id);
        let mut artifacts = status.result.unwrap().artifacts;
        artifacts.sort_by_key(|a| a.role);
        for a in artifacts {
            out.push((status.shot_id.clone(), a.role, a.checksum));
        }
    }
    out
}

/// Minimal HTTP/1.1 endpoint speaking the provider wire format, answering
/// from `provider`. Counts requests; stops when dropped.
pub struct FakeLlmServer {
    pub url: String,
    stop: Arc<AtomicBool>,
    pub requests: Arc<std::sync::atomic::AtomicUsize>,
    handle: Option<JoinHandle<()>>,
    addr: std::net::SocketAddr,
}

fn handle(mut stream: std::net::TcpStream, provider: &dyn LlmProvider) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some((k, v)) = trimmed.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let request: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let messages: Vec<ChatMessage> = serde_json::from_value(request["messages"].clone()).unwrap();
    let (status, payload) = match provider.complete(&messages, 0.0) {
        Ok(text) => ("200 OK", serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]})),
        Err(e) => ("500 Internal Server Error", serde_json::json!({"error": e.to_string()})),
    };
    let payload = payload.to_string();
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
        payload.len()
    );
}

impl FakeLlmServer {
    pub fn start(provider: MockProvider) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(std::sync::atomic::AtomicUsize::new(0));
        let (s, r) = (stop.clone(), requests.clone());
        let handle = thread::spawn(move || {
            for stream in listener.incoming() {
                if s.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    r.fetch_add(1, Ordering::SeqCst);
                    handle(stream, &provider);
                }
            }
        });
        Self { url: format!("http://{addr}/v1/chat"), stop, requests, handle: Some(handle), addr }
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for FakeLlmServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = std::net::TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
