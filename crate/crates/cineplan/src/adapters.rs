//! Backend adapters: in-process placeholder renderer, subprocess and HTTP.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use cineplan_core::media::ArtifactRole;
use cineplan_core::mock_media::mock_render;

use crate::backend::{Backend, BackendCall, BackendResponse, ResponseArtifact};

const TAIL_BYTES: usize = 2048;

fn tail(bytes: &[u8]) -> String {
    let start = bytes.len().saturating_sub(TAIL_BYTES);
    String::from_utf8_lossy(&bytes[start..]).trim().to_owned()
}

fn audio_duration(call: &BackendCall) -> Option<f64> {
    let input = call.input(ArtifactRole::Audio)?;
    if input.path.is_empty() {
        return None;
    }
    let text = fs::read_to_string(Path::new(&call.output_dir).join(&input.path)).ok()?;
    let value: serde_json::Value = serde_json::from_str(&text).ok()?;
    value.get("duration")?.as_f64()
}

/// Writes deterministic placeholder media for `call` under its output
/// directory and describes them. Shared by the in-process mock and the
/// standalone echo renderer.
pub fn render_placeholder(call: &BackendCall) -> std::io::Result<BackendResponse> {
    let out = Path::new(&call.output_dir);
    let inputs: Vec<(ArtifactRole, String)> = call
        .inputs
        .iter()
        .map(|i| (i.role, i.path.clone()))
        .collect();
    let artifact = mock_render(call.role, &call.shot, call.seed, &inputs, audio_duration(call));
    for file in &artifact.files {
        let path = out.join(&file.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, &file.bytes)?;
    }
    Ok(BackendResponse {
        artifacts: vec![ResponseArtifact { role: artifact.role, path: artifact.locator }],
        duration: artifact.duration,
        log: format!("{} placeholder, {} file(s)", call.role, artifact.files.len()),
    })
}

pub struct MockBackend {
    name: String,
    fail_shots: Vec<String>,
}

impl MockBackend {
    pub fn new(name: &str, fail_shots: Vec<String>) -> Self {
        Self { name: name.into(), fail_shots }
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn invoke(&self, call: &BackendCall) -> Result<BackendResponse, String> {
        if self.fail_shots.contains(&call.shot.id) {
            return Err(format!("injected failure for {}", call.shot.id));
        }
        render_placeholder(call).map_err(|e| e.to_string())
    }
}

/// Runs a program per call: request JSON on stdin, response JSON on stdout,
/// exit status 0 on success.
pub struct CommandBackend {
    name: String,
    program: PathBuf,
    args: Vec<String>,
}

impl CommandBackend {
    pub fn new(name: &str, program: PathBuf, args: Vec<String>) -> Self {
        Self { name: name.into(), program, args }
    }
}

impl Backend for CommandBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn invoke(&self, call: &BackendCall) -> Result<BackendResponse, String> {
        let request = serde_json::to_vec(call).expect("call serializes");
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("cannot start {}: {e}", self.program.display()))?;
        {
            let mut stdin = child.stdin.take().expect("piped");
            // a backend that exits without reading its input is judged by its exit status
            let _ = stdin.write_all(&request);
        }
        let output = child
            .wait_with_output()
            .map_err(|e| format!("waiting for {}: {e}", self.program.display()))?;
        if !output.status.success() {
            return Err(format!("{}: {}", output.status, tail(&output.stderr)));
        }
        serde_json::from_slice(&output.stdout).map_err(|e| format!("malformed response: {e}"))
    }
}

/// POSTs the call to a URL and reads the response document from the body.
pub struct HttpBackend {
    name: String,
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(name: &str, url: &str, timeout_secs: u64) -> Result<Self, reqwest::Error> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs.max(1)))
            .build()?;
        Ok(Self { name: name.into(), url: url.into(), client })
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn invoke(&self, call: &BackendCall) -> Result<BackendResponse, String> {
        let resp = self
            .client
            .post(&self.url)
            .json(call)
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.bytes().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {}", tail(&body)));
        }
        serde_json::from_slice(&body).map_err(|e| format!("malformed response: {e}"))
    }
}
