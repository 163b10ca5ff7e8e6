//! Shot rendering through role-bound backends.
//!
//! A backend is anything that turns a [`BackendCall`] into files under the
//! call's `output_dir`. The driver here decides which roles to call for a
//! generation mode, in what order, and records checksums of what came back.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use cineplan_core::digest::sha256_hex;
use cineplan_core::media::{ArtifactRole, GenerationMode, MediaRole};
use cineplan_core::mock_media::audio_manifest;
use cineplan_core::model::{CharacterBank, CharacterEntry, Shot};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{CommandBackend, HttpBackend, MockBackend};

#[derive(Debug, Clone, PartialEq)]
pub struct RenderRequest {
    pub shot: Shot,
    pub characters: Vec<CharacterEntry>,
    pub mode: GenerationMode,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl RenderRequest {
    /// Resolves the shot's characters against the bank. Names missing from
    /// the bank are dropped with a warning.
    pub fn new(shot: &Shot, bank: &CharacterBank, mode: GenerationMode, seed: u64, output_dir: PathBuf) -> Self {
        let characters = shot
            .characters
            .iter()
            .filter_map(|name| {
                let entry = bank.get(name);
                if entry.is_none() {
                    log::warn!("{}: character `{name}` is not in the bank; not passed to backends", shot.id);
                }
                entry.cloned()
            })
            .collect();
        Self { shot: shot.clone(), characters, mode, seed, output_dir }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub role: ArtifactRole,
    /// Relative to the shot directory.
    pub path: String,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderResult {
    pub shot_id: String,
    pub mode: GenerationMode,
    pub artifacts: Vec<Artifact>,
    pub duration: f64,
    pub backend_name: String,
    pub elapsed_ms: u64,
}

impl RenderResult {
    pub fn artifact(&self, role: ArtifactRole) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.role == role)
    }

    /// The artifact that goes into the final cut.
    pub fn final_artifact(&self) -> Option<&Artifact> {
        self.artifact(self.mode.final_role())
    }

    pub fn roles(&self) -> Vec<ArtifactRole> {
        self.artifacts.iter().map(|a| a.role).collect()
    }
}

/// Upstream artifact handed to a later call. `path` is relative to the
/// call's `output_dir`; empty means "none" (a silent audio track).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputArtifact {
    pub role: ArtifactRole,
    pub path: String,
}

/// The JSON document sent to a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendCall {
    pub shot: Shot,
    pub characters: Vec<CharacterEntry>,
    pub role: MediaRole,
    pub mode: GenerationMode,
    pub seed: u64,
    pub output_dir: String,
    #[serde(default)]
    pub inputs: Vec<InputArtifact>,
}

impl BackendCall {
    pub fn input(&self, role: ArtifactRole) -> Option<&InputArtifact> {
        self.inputs.iter().find(|i| i.role == role)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseArtifact {
    pub role: ArtifactRole,
    pub path: String,
}

/// The JSON document a backend answers with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub artifacts: Vec<ResponseArtifact>,
    pub duration: f64,
    #[serde(default)]
    pub log: String,
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    /// Performs one call; the error string is a human-readable detail.
    fn invoke(&self, call: &BackendCall) -> Result<BackendResponse, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Invocation {
    Mock {
        /// Shots this backend fails on, for fault-injection runs.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        fail_shots: Vec<String>,
    },
    Command {
        program: PathBuf,
        #[serde(default)]
        args: Vec<String>,
    },
    Http {
        url: String,
        #[serde(default = "default_backend_timeout")]
        timeout_secs: u64,
    },
}

fn default_backend_timeout() -> u64 {
    600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub roles: Vec<MediaRole>,
    #[serde(flatten)]
    pub invocation: Invocation,
}

impl BackendDescriptor {
    pub fn mock(name: &str) -> Self {
        Self {
            name: name.into(),
            roles: MediaRole::ALL.to_vec(),
            invocation: Invocation::Mock { fail_shots: Vec::new() },
        }
    }

    pub fn instantiate(&self) -> Result<Arc<dyn Backend>, RenderError> {
        Ok(match &self.invocation {
            Invocation::Mock { fail_shots } => Arc::new(MockBackend::new(&self.name, fail_shots.clone())),
            Invocation::Command { program, args } => {
                Arc::new(CommandBackend::new(&self.name, program.clone(), args.clone()))
            }
            Invocation::Http { url, timeout_secs } => Arc::new(
                HttpBackend::new(&self.name, url, *timeout_secs)
                    .map_err(|e| RenderError::Io(format!("backend `{}`: {e}", self.name)))?,
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("no backend bound for role `{0}`")]
    RoleUnsupported(MediaRole),
    #[error("{role} backend failed: {detail}")]
    BackendFailure { role: MediaRole, detail: String },
    #[error("{0} backend did not produce its artifact")]
    ArtifactMissing(MediaRole),
    #[error("character `{0}` speaks but has no voice sample")]
    MissingVoiceSample(String),
    #[error("{0}")]
    Io(String),
}

/// Role → backend bindings for a job.
#[derive(Clone, Default)]
pub struct BackendSet {
    by_role: BTreeMap<MediaRole, Arc<dyn Backend>>,
}

impl BackendSet {
    /// Binds each role to the first descriptor that declares it.
    pub fn from_descriptors(descriptors: &[BackendDescriptor]) -> Result<Self, RenderError> {
        let mut set = Self::default();
        for d in descriptors {
            let backend = d.instantiate()?;
            for role in &d.roles {
                set.by_role.entry(*role).or_insert_with(|| backend.clone());
            }
        }
        Ok(set)
    }

    pub fn bind(&mut self, role: MediaRole, backend: Arc<dyn Backend>) {
        self.by_role.insert(role, backend);
    }

    pub fn get(&self, role: MediaRole) -> Option<&Arc<dyn Backend>> {
        self.by_role.get(&role)
    }

    /// Every role the mode needs must be bound.
    pub fn require(&self, mode: GenerationMode) -> Result<(), RenderError> {
        match mode.required_roles().iter().find(|r| !self.by_role.contains_key(r)) {
            Some(role) => Err(RenderError::RoleUnsupported(*role)),
            None => Ok(()),
        }
    }
}

/// Sees every backend call just before it is issued.
pub trait CallObserver: Send + Sync {
    fn backend_call(&self, shot_id: &str, role: MediaRole, backend: &str);
}

pub struct NoObserver;

impl CallObserver for NoObserver {
    fn backend_call(&self, _: &str, _: MediaRole, _: &str) {}
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallEvent {
    pub shot_id: String,
    pub role: MediaRole,
    pub backend: String,
}

/// Records calls in issue order.
#[derive(Debug, Default)]
pub struct CallLog {
    events: Mutex<Vec<CallEvent>>,
}

impl CallLog {
    pub fn events(&self) -> Vec<CallEvent> {
        self.events.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.events.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl CallObserver for CallLog {
    fn backend_call(&self, shot_id: &str, role: MediaRole, backend: &str) {
        self.events.lock().unwrap().push(CallEvent {
            shot_id: shot_id.into(),
            role,
            backend: backend.into(),
        });
    }
}

/// sha256 of a file, or of a sorted `checksum  path` listing for a directory.
pub fn checksum_path(path: &Path) -> io::Result<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        let mut listing = String::new();
        for rel in files {
            let bytes = fs::read(path.join(&rel))?;
            listing.push_str(&format!("{}  {rel}\n", sha256_hex(&bytes)));
        }
        Ok(sha256_hex(listing.as_bytes()))
    } else {
        Ok(sha256_hex(&fs::read(path)?))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("below root");
            out.push(
                rel.components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/"),
            );
        }
    }
    Ok(())
}

/// Checks every artifact of `result` against its recorded checksum.
/// Returns the first role whose bytes differ or are gone.
pub fn verify_artifacts(shot_dir: &Path, result: &RenderResult) -> Result<(), ArtifactRole> {
    for a in &result.artifacts {
        match checksum_path(&shot_dir.join(&a.path)) {
            Ok(sum) if sum == a.checksum => {}
            _ => return Err(a.role),
        }
    }
    Ok(())
}

/// Normalizes a response path to one relative to `output_dir`, refusing
/// anything that escapes it.
fn relative_to(output_dir: &Path, path: &str) -> Option<String> {
    let p = Path::new(path);
    let rel = if p.is_absolute() { p.strip_prefix(output_dir).ok()? } else { p };
    let parts: Vec<String> = rel
        .components()
        .map(|c| match c {
            Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            Component::CurDir => Some(String::new()),
            _ => None,
        })
        .collect::<Option<Vec<_>>>()?
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect();
    (!parts.is_empty()).then(|| parts.join("/"))
}

struct Driver<'a> {
    req: &'a RenderRequest,
    backends: &'a BackendSet,
    observer: &'a dyn CallObserver,
    used: Mutex<Vec<String>>,
}

struct Produced {
    artifact: Artifact,
    duration: f64,
}

impl Driver<'_> {
    fn call(&self, role: MediaRole, inputs: Vec<InputArtifact>) -> Result<Produced, RenderError> {
        let backend = self.backends.get(role).ok_or(RenderError::RoleUnsupported(role))?;
        let call = BackendCall {
            shot: self.req.shot.clone(),
            characters: self.req.characters.clone(),
            role,
            mode: self.req.mode,
            seed: self.req.seed,
            output_dir: self.req.output_dir.to_string_lossy().into_owned(),
            inputs,
        };
        self.observer.backend_call(&self.req.shot.id, role, backend.name());
        {
            let mut used = self.used.lock().unwrap();
            if !used.iter().any(|n| n == backend.name()) {
                used.push(backend.name().to_owned());
            }
        }
        let response = backend
            .invoke(&call)
            .map_err(|detail| RenderError::BackendFailure { role, detail })?;

        let wanted = role.produces();
        let reported = response
            .artifacts
            .iter()
            .find(|a| a.role == wanted)
            .ok_or(RenderError::ArtifactMissing(role))?;
        let path = relative_to(&self.req.output_dir, &reported.path).ok_or(RenderError::ArtifactMissing(role))?;
        let full = self.req.output_dir.join(&path);
        if !full.exists() {
            return Err(RenderError::ArtifactMissing(role));
        }
        let checksum = checksum_path(&full).map_err(|e| RenderError::Io(format!("{}: {e}", full.display())))?;
        Ok(Produced {
            artifact: Artifact { role: wanted, path, checksum },
            duration: response.duration,
        })
    }

    fn finish(self, artifacts: Vec<Artifact>, duration: f64, started: Instant) -> RenderResult {
        RenderResult {
            shot_id: self.req.shot.id.clone(),
            mode: self.req.mode,
            artifacts,
            duration,
            backend_name: self.used.into_inner().unwrap().join("+"),
            elapsed_ms: started.elapsed().as_millis() as u64,
        }
    }
}

fn input(p: &Produced) -> InputArtifact {
    InputArtifact { role: p.artifact.role, path: p.artifact.path.clone() }
}

fn prepare(req: &RenderRequest) -> Result<(), RenderError> {
    fs::create_dir_all(&req.output_dir).map_err(|e| RenderError::Io(format!("{}: {e}", req.output_dir.display())))
}

/// Renders one shot according to its mode.
pub fn render_shot(req: &RenderRequest, backends: &BackendSet, observer: &dyn CallObserver) -> Result<RenderResult, RenderError> {
    backends.require(req.mode)?;
    if req.mode == GenerationMode::JointAudioVideo {
        return compose_joint(req, backends, observer);
    }
    prepare(req)?;
    let started = Instant::now();
    let driver = Driver { req, backends, observer, used: Mutex::new(Vec::new()) };
    match req.mode {
        GenerationMode::PureOneStage => {
            let video = driver.call(MediaRole::Video, Vec::new())?;
            let duration = video.duration;
            Ok(driver.finish(vec![video.artifact], duration, started))
        }
        _ => {
            let keyframe = driver.call(MediaRole::Image, Vec::new())?;
            let video = driver.call(MediaRole::Video, vec![input(&keyframe)])?;
            let duration = video.duration;
            Ok(driver.finish(vec![keyframe.artifact, video.artifact], duration, started))
        }
    }
}

pub const SILENT_AUDIO: &str = "audio.json";

/// Joint audio-video rendering: keyframe and speech first (concurrently),
/// then the talking clip that consumes both.
///
/// A shot without subtitles gets no audio call; a silent track is written
/// locally and the talking backend receives an empty audio reference.
pub fn compose_joint(req: &RenderRequest, backends: &BackendSet, observer: &dyn CallObserver) -> Result<RenderResult, RenderError> {
    backends.require(GenerationMode::JointAudioVideo)?;
    for speaker in req.shot.speakers() {
        let voiced = req
            .characters
            .iter()
            .any(|c| c.name == speaker && c.voice_ref.is_some());
        if !voiced {
            return Err(RenderError::MissingVoiceSample(speaker.to_owned()));
        }
    }
    prepare(req)?;
    let started = Instant::now();
    let driver = Driver { req, backends, observer, used: Mutex::new(Vec::new()) };

    let (keyframe, audio, audio_ref) = if req.shot.subtitles.is_empty() {
        let keyframe = driver.call(MediaRole::Image, Vec::new())?;
        let (bytes, duration) = audio_manifest(&req.shot);
        let path = req.output_dir.join(SILENT_AUDIO);
        fs::write(&path, &bytes).map_err(|e| RenderError::Io(format!("{}: {e}", path.display())))?;
        let audio = Produced {
            artifact: Artifact {
                role: ArtifactRole::Audio,
                path: SILENT_AUDIO.into(),
                checksum: sha256_hex(&bytes),
            },
            duration,
        };
        let silent = InputArtifact { role: ArtifactRole::Audio, path: String::new() };
        (keyframe, audio, silent)
    } else {
        let (keyframe, audio) = thread::scope(|s| {
            let image = s.spawn(|| driver.call(MediaRole::Image, Vec::new()));
            let audio = driver.call(MediaRole::Audio, Vec::new());
            (image.join().expect("image call panicked"), audio)
        });
        let (keyframe, audio) = (keyframe?, audio?);
        let audio_ref = input(&audio);
        (keyframe, audio, audio_ref)
    };

    let composed = driver.call(MediaRole::Talking, vec![input(&keyframe), audio_ref])?;
    let duration = composed.duration;
    Ok(driver.finish(vec![keyframe.artifact, audio.artifact, composed.artifact], duration, started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cineplan_core::model::{CameraMovement, ShotType, SubtitleLine};

    pub(crate) fn shot(lines: &[(&str, &str)]) -> Shot {
        Shot {
            id: "sc_001/sh_001".into(),
            scene_id: "sc_001".into(),
            index: 1,
            plot: "Elsa follows the voice to the shore.".into(),
            characters: vec!["Elsa".into(), "Anna".into()],
            shot_type: ShotType::Medium,
            camera_movement: CameraMovement::Pan,
            lighting: "moonlight".into(),
            subtitles: lines
                .iter()
                .map(|(c, l)| SubtitleLine { character: (*c).into(), line: (*l).into() })
                .collect(),
            continuity_notes: String::new(),
            rationale: "sets up the journey".into(),
            duration_hint: 5.0,
        }
    }

    fn bank(voiced: bool) -> CharacterBank {
        let entry = |n: &str| CharacterEntry {
            name: n.into(),
            portrait_ref: format!("{n}.ppm"),
            voice_ref: voiced.then(|| format!("{n}.wav")),
        };
        CharacterBank::new(vec![entry("Elsa"), entry("Anna")])
    }

    fn mocks() -> BackendSet {
        BackendSet::from_descriptors(&[BackendDescriptor::mock("mock")]).unwrap()
    }

    fn request(mode: GenerationMode, lines: &[(&str, &str)], voiced: bool, dir: &Path) -> RenderRequest {
        RenderRequest::new(&shot(lines), &bank(voiced), mode, 7, dir.to_path_buf())
    }

    #[test]
    fn two_stage_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = render_shot(&request(GenerationMode::PureTwoStage, &[], false, a.path()), &mocks(), &NoObserver).unwrap();
        let rb = render_shot(&request(GenerationMode::PureTwoStage, &[], false, b.path()), &mocks(), &NoObserver).unwrap();
        assert_eq!(ra.roles(), vec![ArtifactRole::Keyframe, ArtifactRole::Video]);
        assert_eq!(ra.artifacts, rb.artifacts);
        assert_eq!(ra.duration, 5.0);
        assert_eq!(ra.backend_name, "mock");
    }

    #[test]
    fn one_stage_makes_only_video() {
        let dir = tempfile::tempdir().unwrap();
        let log = CallLog::default();
        let r = render_shot(&request(GenerationMode::PureOneStage, &[], false, dir.path()), &mocks(), &log).unwrap();
        assert_eq!(r.roles(), vec![ArtifactRole::Video]);
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn joint_calls_image_and_audio_before_talking() {
        let dir = tempfile::tempdir().unwrap();
        let log = CallLog::default();
        let req = request(GenerationMode::JointAudioVideo, &[("Elsa", "Who is there?")], true, dir.path());
        let r = render_shot(&req, &mocks(), &log).unwrap();
        assert_eq!(r.roles(), vec![ArtifactRole::Keyframe, ArtifactRole::Audio, ArtifactRole::Composed]);
        let roles: Vec<MediaRole> = log.events().iter().map(|e| e.role).collect();
        assert_eq!(roles.len(), 3);
        assert_eq!(roles[2], MediaRole::Talking);
        assert!(roles[..2].contains(&MediaRole::Image) && roles[..2].contains(&MediaRole::Audio));
    }

    #[test]
    fn silent_joint_shot_skips_audio_call() {
        let dir = tempfile::tempdir().unwrap();
        let log = CallLog::default();
        let req = request(GenerationMode::JointAudioVideo, &[], false, dir.path());
        let r = compose_joint(&req, &mocks(), &log).unwrap();
        let roles: Vec<MediaRole> = log.events().iter().map(|e| e.role).collect();
        assert_eq!(roles, vec![MediaRole::Image, MediaRole::Talking]);
        assert_eq!(r.roles(), vec![ArtifactRole::Keyframe, ArtifactRole::Audio, ArtifactRole::Composed]);
        assert!(dir.path().join(SILENT_AUDIO).is_file());
    }

    #[test]
    fn missing_voice_aborts_before_any_call() {
        let dir = tempfile::tempdir().unwrap();
        let log = CallLog::default();
        let req = request(GenerationMode::JointAudioVideo, &[("Anna", "Elsa!")], false, dir.path());
        assert_eq!(
            compose_joint(&req, &mocks(), &log),
            Err(RenderError::MissingVoiceSample("Anna".into()))
        );
        assert!(log.is_empty());
    }

    #[test]
    fn unbound_role_is_rejected_before_any_call() {
        let dir = tempfile::tempdir().unwrap();
        let mut partial = BackendDescriptor::mock("partial");
        partial.roles = vec![MediaRole::Image, MediaRole::Talking];
        let set = BackendSet::from_descriptors(&[partial]).unwrap();
        let log = CallLog::default();
        let req = request(GenerationMode::JointAudioVideo, &[("Elsa", "Hi")], true, dir.path());
        assert_eq!(render_shot(&req, &set, &log), Err(RenderError::RoleUnsupported(MediaRole::Audio)));
        assert!(log.is_empty());
    }

    #[test]
    fn injected_failure_names_the_role() {
        let dir = tempfile::tempdir().unwrap();
        let desc = BackendDescriptor {
            invocation: Invocation::Mock { fail_shots: vec!["sc_001/sh_001".into()] },
            ..BackendDescriptor::mock("flaky")
        };
        let set = BackendSet::from_descriptors(&[desc]).unwrap();
        let err = render_shot(&request(GenerationMode::PureTwoStage, &[], false, dir.path()), &set, &NoObserver).unwrap_err();
        assert!(matches!(err, RenderError::BackendFailure { role: MediaRole::Image, .. }));
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let r = render_shot(&request(GenerationMode::PureTwoStage, &[], false, dir.path()), &mocks(), &NoObserver).unwrap();
        assert_eq!(verify_artifacts(dir.path(), &r), Ok(()));
        fs::write(dir.path().join("video/frame_0003.ppm"), b"P6\n1 1\n255\n\0\0\0").unwrap();
        assert_eq!(verify_artifacts(dir.path(), &r), Err(ArtifactRole::Video));
    }

    #[test]
    fn response_paths_stay_inside_output_dir() {
        let out = Path::new("/jobs/a/shots/sc_001/sh_001");
        assert_eq!(relative_to(out, "video").as_deref(), Some("video"));
        assert_eq!(relative_to(out, "./video/clip.json").as_deref(), Some("video/clip.json"));
        assert_eq!(relative_to(out, "/jobs/a/shots/sc_001/sh_001/keyframe.ppm").as_deref(), Some("keyframe.ppm"));
        assert_eq!(relative_to(out, "../sh_002/keyframe.ppm"), None);
        assert_eq!(relative_to(out, "/tmp/x.ppm"), None);
    }

    #[test]
    fn call_serializes_to_documented_fields() {
        let req = request(GenerationMode::PureTwoStage, &[], true, Path::new("/out"));
        let call = BackendCall {
            shot: req.shot.clone(),
            characters: req.characters.clone(),
            role: MediaRole::Video,
            mode: req.mode,
            seed: 7,
            output_dir: "/out".into(),
            inputs: vec![InputArtifact { role: ArtifactRole::Keyframe, path: "keyframe.ppm".into() }],
        };
        let v = serde_json::to_value(&call).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["characters", "inputs", "mode", "output_dir", "role", "seed", "shot"]);
        assert_eq!(v["role"], "video");
        assert_eq!(v["mode"], "pure-two-stage");
        assert_eq!(v["characters"][0]["voice_ref"], "Elsa.wav");
    }
}
