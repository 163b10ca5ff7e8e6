//! Job orchestration: planning cascade, shot rendering with resume, final
//! assembly and cost accounting.
//!
//! Job directory layout:
//!
//! ```text
//! job.json                 render settings and input root, written first
//! plan.json                written once, after planning succeeds
//! traces/NNN-*.json        one file per stage attempt
//! shots/sc_iii/sh_jjj/     artifacts + status.json per shot
//! manifest.json            final cut, written when every shot was attempted
//! cost.json                accumulated timings and call counts
//! ```

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use cineplan_core::agents::{AgentConfig, AgentEnv, AgentKind};
use cineplan_core::assemble::{assemble, AssemblyManifest, RenderedShot};
use cineplan_core::cascade::{plan_cascade, CascadeConfig, CascadeError};
use cineplan_core::cot::{Clock, CotTrace, LlmProvider, TemplateSet};
use cineplan_core::digest::shot_seed;
use cineplan_core::media::{GenerationMode, MediaRole};
use cineplan_core::model::{CharacterBank, MoviePlan, ScriptSynopsis, SynopsisMode};
use cineplan_core::ordering::plan_ordering;
use cineplan_core::validate::{validate_character_bank, validate_plan, ArtifactResolver, ValidationReport};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    render_shot, verify_artifacts, BackendDescriptor, BackendSet, CallObserver, NoObserver, RenderRequest,
    RenderResult,
};
use crate::provider::ProviderConfig;

pub const JOB_FILE: &str = "job.json";
pub const PLAN_FILE: &str = "plan.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const COST_FILE: &str = "cost.json";
pub const STATUS_FILE: &str = "status.json";
pub const TRACES_DIR: &str = "traces";
pub const SHOTS_DIR: &str = "shots";

pub const DEFAULT_WORKER_BOUND: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfigs {
    pub director: AgentConfig,
    pub scene_plan: AgentConfig,
    pub shot_plan: AgentConfig,
}

impl Default for AgentConfigs {
    fn default() -> Self {
        Self {
            director: AgentConfig::default_for(AgentKind::Director),
            scene_plan: AgentConfig::default_for(AgentKind::ScenePlan),
            shot_plan: AgentConfig::default_for(AgentKind::ShotPlan),
        }
    }
}

/// What the render phase needs; persisted in `job.json` so that a job can
/// be resumed from its directory alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub mode: GenerationMode,
    pub worker_bound: usize,
    pub seed: u64,
    pub backends: Vec<BackendDescriptor>,
    /// Directory that relative portrait and voice references resolve against.
    pub inputs_root: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobConfig {
    pub job_dir: PathBuf,
    pub provider: ProviderConfig,
    pub agents: AgentConfigs,
    pub render: RenderSettings,
    /// Pins the plan timestamp; defaults to the current UTC time.
    pub created_at: Option<String>,
}

impl JobConfig {
    pub fn validate(&self, synopsis: &ScriptSynopsis) -> Result<(), PipelineError> {
        let r = &self.render;
        if r.worker_bound == 0 {
            return Err(PipelineError::Config("worker_bound must be at least 1".into()));
        }
        if synopsis.mode.is_joint() != (r.mode == GenerationMode::JointAudioVideo) {
            return Err(PipelineError::Config(format!(
                "synopsis mode `{}` does not match generation mode `{}`",
                synopsis.mode.as_str(),
                r.mode
            )));
        }
        for agent in [&self.agents.director, &self.agents.scene_plan, &self.agents.shot_plan] {
            agent.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        self.provider.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let set = BackendSet::from_descriptors(&r.backends).map_err(|e| PipelineError::Config(e.to_string()))?;
        set.require(r.mode).map_err(|e| PipelineError::Config(e.to_string()))
    }
}

/// Default generation mode for a synopsis mode.
pub fn default_mode(mode: SynopsisMode) -> GenerationMode {
    match mode {
        SynopsisMode::PureVideo => GenerationMode::PureTwoStage,
        SynopsisMode::JointAudioVideo => GenerationMode::JointAudioVideo,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub format_version: String,
    pub model_name: String,
    pub render: RenderSettings,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid inputs: {}", summarize(.0))]
    InvalidInput(ValidationReport),
    #[error("job directory {} is not empty", .0.display())]
    JobDirNotEmpty(PathBuf),
    #[error("planning failed in {}: {detail}", .agent.map_or("validation", AgentKind::as_str))]
    PlanningFailed { agent: Option<AgentKind>, detail: String },
    #[error("corrupt job directory: {0}")]
    CorruptJobDir(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

fn summarize(report: &ValidationReport) -> String {
    report
        .errors()
        .map(|i| format!("{}: {}", i.locus, i.message))
        .collect::<Vec<_>>()
        .join("; ")
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

/// Writes through a temporary sibling and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => PipelineError::CorruptJobDir(format!("{} is missing", path.display())),
        _ => PipelineError::Io { path: path.to_path_buf(), source: e },
    })?;
    serde_json::from_str(&text).map_err(|e| PipelineError::CorruptJobDir(format!("{}: {e}", path.display())))
}

/// Resolves locators relative to a root directory on disk.
pub struct FsResolver<'a>(pub &'a Path);

impl ArtifactResolver for FsResolver<'_> {
    fn resolves(&self, locator: &str) -> bool {
        !locator.is_empty() && self.0.join(locator).exists()
    }
}

pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShotState {
    Pending,
    Rendering,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: ShotState,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotStatus {
    pub shot_id: String,
    pub state: ShotState,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<RenderResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Every state change, oldest first. Never rewritten.
    pub history: Vec<Transition>,
}

impl ShotStatus {
    pub fn pending(shot_id: &str) -> Self {
        Self {
            shot_id: shot_id.into(),
            state: ShotState::Pending,
            attempts: 0,
            result: None,
            error: None,
            history: vec![Transition { state: ShotState::Pending, attempt: 0, detail: None }],
        }
    }

    fn allowed(from: ShotState, to: ShotState) -> bool {
        use ShotState::*;
        matches!(
            (from, to),
            (Pending, Rendering) | (Rendering, Done) | (Rendering, Failed) | (Failed, Rendering)
                // demotions: tampered artifacts and renders cut short by a crash
                | (Done, Pending) | (Rendering, Pending)
        )
    }

    /// Moves to `to`, appending to the history. Panics on a transition the
    /// state machine does not allow.
    pub fn transition(&mut self, to: ShotState, detail: Option<String>) {
        assert!(
            Self::allowed(self.state, to),
            "{}: illegal transition {:?} -> {:?}",
            self.shot_id,
            self.state,
            to
        );
        if to == ShotState::Rendering {
            self.attempts += 1;
            self.result = None;
            self.error = None;
        }
        self.state = to;
        self.history.push(Transition { state: to, attempt: self.attempts, detail });
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub planning_ms: u64,
    pub rendering_ms: u64,
    pub assembly_ms: u64,
    pub total_ms: u64,
    /// One per stage attempt, retries included.
    pub provider_calls: usize,
    pub provider_calls_by_agent: BTreeMap<String, usize>,
    pub render_calls: usize,
    pub backend_calls: usize,
    pub backend_calls_by_role: BTreeMap<String, usize>,
    pub shots_done: usize,
    pub shots_failed: usize,
    pub shots_skipped: usize,
}

impl CostReport {
    /// Adds the counters and times of a later invocation on the same job.
    pub fn absorb(&mut self, other: &CostReport) {
        self.planning_ms += other.planning_ms;
        self.rendering_ms += other.rendering_ms;
        self.assembly_ms += other.assembly_ms;
        self.total_ms += other.total_ms;
        self.provider_calls += other.provider_calls;
        for (k, v) in &other.provider_calls_by_agent {
            *self.provider_calls_by_agent.entry(k.clone()).or_default() += v;
        }
        self.render_calls += other.render_calls;
        self.backend_calls += other.backend_calls;
        for (k, v) in &other.backend_calls_by_role {
            *self.backend_calls_by_role.entry(k.clone()).or_default() += v;
        }
        // shot tallies describe the latest state, not a sum
        self.shots_done = other.shots_done;
        self.shots_failed = other.shots_failed;
        self.shots_skipped = other.shots_skipped;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobStatus {
    Complete,
    /// Every shot was attempted; this many failed.
    RenderIncomplete(usize),
    /// Stopped by the cancel flag; this many shots were not attempted.
    Interrupted(usize),
}

#[derive(Debug, Clone)]
pub struct JobOutcome {
    pub plan: MoviePlan,
    /// Absent when the run was interrupted.
    pub manifest: Option<AssemblyManifest>,
    pub cost: CostReport,
    pub status: JobStatus,
    /// `(shot_id, error)` for shots that failed in this run.
    pub failures: Vec<(String, String)>,
    /// Done shots whose artifacts no longer matched and were re-rendered.
    pub checksum_mismatches: Vec<String>,
}

/// Interruption and observation points of a run.
#[derive(Clone, Copy)]
pub struct Hooks<'a> {
    pub observer: &'a dyn CallObserver,
    /// Checked before each shot starts; set it to stop scheduling.
    pub cancel: Option<&'a AtomicBool>,
    /// Called after each shot reaches done or failed.
    pub on_shot: Option<&'a (dyn Fn(&ShotStatus) + Sync)>,
}

impl Default for Hooks<'_> {
    fn default() -> Self {
        Self { observer: &NoObserver, cancel: None, on_shot: None }
    }
}

/// Everything planning needs besides the inputs.
#[derive(Clone, Copy)]
pub struct Planner<'a> {
    pub provider: &'a dyn LlmProvider,
    pub templates: &'a TemplateSet,
    pub clock: &'a dyn Clock,
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn prepare_job_dir(dir: &Path) -> Result<(), PipelineError> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(io_err(dir))?;
        if entries.next().is_some() {
            return Err(PipelineError::JobDirNotEmpty(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir.join(TRACES_DIR)).map_err(io_err(dir))
}

fn write_traces(job_dir: &Path, traces: &[CotTrace]) -> Result<(), PipelineError> {
    let dir = job_dir.join(TRACES_DIR);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (n, trace) in traces.iter().enumerate() {
        let path = dir.join(trace.file_name(n + 1));
        fs::write(&path, json_bytes(trace)).map_err(io_err(&path))?;
    }
    Ok(())
}

fn write_plan_once(job_dir: &Path, plan: &MoviePlan) -> Result<(), PipelineError> {
    let path = job_dir.join(PLAN_FILE);
    let mut file = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)
        .map_err(io_err(&path))?;
    file.write_all(plan.to_json().as_bytes()).map_err(io_err(&path))
}

fn cost_update(job_dir: &Path, run: &CostReport) -> Result<CostReport, PipelineError> {
    let path = job_dir.join(COST_FILE);
    let mut total = if path.exists() { read_json(&path)? } else { CostReport::default() };
    total.absorb(run);
    write_atomic(&path, &json_bytes(&total))?;
    Ok(total)
}

/// Checks the synopsis and bank before any provider call.
pub fn validate_inputs(
    synopsis: &ScriptSynopsis,
    bank: &CharacterBank,
    inputs_root: &Path,
) -> Result<ValidationReport, PipelineError> {
    let mut report = validate_character_bank(bank, synopsis.mode, None, &FsResolver(inputs_root));
    if synopsis.body.trim().is_empty() {
        report.issues.push(cineplan_core::Issue {
            severity: cineplan_core::Severity::Error,
            code: cineplan_core::IssueCode::EmptySynopsis,
            locus: "synopsis".into(),
            message: "synopsis body is empty".into(),
        });
    }
    if report.has_errors() {
        return Err(PipelineError::InvalidInput(report));
    }
    Ok(report)
}

/// Runs the planning cascade into a fresh job directory: writes `job.json`,
/// every trace and `plan.json`.
pub fn plan_job(
    synopsis: &ScriptSynopsis,
    bank: &CharacterBank,
    cfg: &JobConfig,
    planner: Planner<'_>,
) -> Result<(MoviePlan, CostReport), PipelineError> {
    let started = Instant::now();
    cfg.validate(synopsis)?;
    for issue in validate_inputs(synopsis, bank, &cfg.render.inputs_root)?.warnings() {
        log::warn!("{}: {}", issue.locus, issue.message);
    }
    prepare_job_dir(&cfg.job_dir)?;
    let record = JobRecord {
        format_version: "1".into(),
        model_name: cfg.provider.model_name.clone(),
        render: cfg.render.clone(),
    };
    write_atomic(&cfg.job_dir.join(JOB_FILE), &json_bytes(&record))?;

    let mut director = cfg.agents.director.clone();
    let mut scene = cfg.agents.scene_plan.clone();
    let mut shot = cfg.agents.shot_plan.clone();
    for a in [&mut director, &mut scene, &mut shot] {
        if a.sampling == 0.0 {
            a.sampling = cfg.provider.sampling;
        }
    }
    let cascade_cfg = CascadeConfig {
        director,
        scene_plan: scene,
        shot_plan: shot,
        model_name: cfg.provider.model_name.clone(),
        created_at: cfg.created_at.clone().unwrap_or_else(now_rfc3339),
    };
    let env = AgentEnv { provider: planner.provider, templates: planner.templates, clock: planner.clock };
    let mut traces = Vec::new();
    let planned = plan_cascade(synopsis, bank, env, &cascade_cfg, &mut traces);
    write_traces(&cfg.job_dir, &traces)?;

    let mut cost = CostReport { provider_calls: traces.len(), ..CostReport::default() };
    for t in &traces {
        *cost.provider_calls_by_agent.entry(t.agent_kind.clone()).or_default() += 1;
    }
    let plan = match planned {
        Ok(plan) => plan,
        Err(e) => {
            cost.planning_ms = started.elapsed().as_millis() as u64;
            cost.total_ms = cost.planning_ms;
            cost_update(&cfg.job_dir, &cost)?;
            let agent = e.agent();
            let detail = match e {
                CascadeError::Agent { unit, source, .. } => format!("{unit}: {source}"),
                other => other.to_string(),
            };
            return Err(PipelineError::PlanningFailed { agent, detail });
        }
    };
    write_plan_once(&cfg.job_dir, &plan)?;
    cost.planning_ms = started.elapsed().as_millis() as u64;
    cost.total_ms = cost.planning_ms;
    Ok((plan, cost))
}

/// Plans and renders a new job.
pub fn run_pipeline(
    synopsis: &ScriptSynopsis,
    bank: &CharacterBank,
    cfg: &JobConfig,
    planner: Planner<'_>,
    hooks: Hooks<'_>,
) -> Result<JobOutcome, PipelineError> {
    let (plan, planning) = plan_job(synopsis, bank, cfg, planner)?;
    render_job(&cfg.job_dir, plan, planning, hooks)
}

/// Standalone planning: the cascade plus a cost file.
pub fn plan_only(
    synopsis: &ScriptSynopsis,
    bank: &CharacterBank,
    cfg: &JobConfig,
    planner: Planner<'_>,
) -> Result<(MoviePlan, CostReport), PipelineError> {
    let (plan, cost) = plan_job(synopsis, bank, cfg, planner)?;
    let total = cost_update(&cfg.job_dir, &cost)?;
    Ok((plan, total))
}

/// Re-enters a job: verifies done shots, renders the rest, assembles.
pub fn resume(job_dir: &Path, hooks: Hooks<'_>) -> Result<JobOutcome, PipelineError> {
    let plan_path = job_dir.join(PLAN_FILE);
    let text = fs::read_to_string(&plan_path)
        .map_err(|_| PipelineError::CorruptJobDir(format!("{} is missing", plan_path.display())))?;
    let plan = MoviePlan::from_json(&text)
        .map_err(|e| PipelineError::CorruptJobDir(format!("{}: {e}", plan_path.display())))?;
    render_job(job_dir, plan, CostReport::default(), hooks)
}

/// Starts a job from an existing plan document: writes `job.json` and
/// `plan.json` into an empty job directory and renders.
pub fn render_existing_plan(
    plan: MoviePlan,
    cfg: &JobConfig,
    hooks: Hooks<'_>,
) -> Result<JobOutcome, PipelineError> {
    cfg.validate(&plan.synopsis)?;
    prepare_job_dir(&cfg.job_dir)?;
    let record = JobRecord {
        format_version: "1".into(),
        model_name: cfg.provider.model_name.clone(),
        render: cfg.render.clone(),
    };
    write_atomic(&cfg.job_dir.join(JOB_FILE), &json_bytes(&record))?;
    write_plan_once(&cfg.job_dir, &plan)?;
    render_job(&cfg.job_dir, plan, CostReport::default(), hooks)
}

pub fn shot_dir(job_dir: &Path, shot_id: &str) -> PathBuf {
    job_dir.join(SHOTS_DIR).join(shot_id)
}

pub fn read_status(job_dir: &Path, shot_id: &str) -> Result<Option<ShotStatus>, PipelineError> {
    let path = shot_dir(job_dir, shot_id).join(STATUS_FILE);
    if !path.exists() {
        return Ok(None);
    }
    read_json(&path).map(Some)
}

fn write_status(job_dir: &Path, status: &ShotStatus) -> Result<(), PipelineError> {
    let dir = shot_dir(job_dir, &status.shot_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_atomic(&dir.join(STATUS_FILE), &json_bytes(status))
}

/// Removes everything in a shot directory except its status record.
fn clear_artifacts(dir: &Path) -> Result<(), PipelineError> {
    if !dir.exists() {
        return Ok(());
    }
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.file_name().is_some_and(|n| n == STATUS_FILE) {
            continue;
        }
        let removed = if path.is_dir() { fs::remove_dir_all(&path) } else { fs::remove_file(&path) };
        removed.map_err(io_err(&path))?;
    }
    Ok(())
}

/// Counts backend calls per role and forwards them.
struct Counting<'a> {
    inner: &'a dyn CallObserver,
    by_role: Mutex<BTreeMap<MediaRole, usize>>,
}

impl CallObserver for Counting<'_> {
    fn backend_call(&self, shot_id: &str, role: MediaRole, backend: &str) {
        *self.by_role.lock().unwrap().entry(role).or_default() += 1;
        self.inner.backend_call(shot_id, role, backend);
    }
}

fn absolute_bank(bank: &CharacterBank, root: &Path) -> CharacterBank {
    let mut bank = bank.clone();
    for e in &mut bank.entries {
        e.portrait_ref = root.join(&e.portrait_ref).to_string_lossy().into_owned();
        if let Some(v) = &mut e.voice_ref {
            *v = root.join(&*v).to_string_lossy().into_owned();
        }
    }
    bank
}

/// Render phase over a job directory that holds `job.json` and whose plan
/// is `plan`.
fn render_job(job_dir: &Path, plan: MoviePlan, mut cost: CostReport, hooks: Hooks<'_>) -> Result<JobOutcome, PipelineError> {
    let started = Instant::now();
    let record: JobRecord = read_json(&job_dir.join(JOB_FILE))?;
    let settings = &record.render;
    let order = plan_ordering(&plan).map_err(|_| {
        PipelineError::CorruptJobDir(format!("plan fails validation: {}", summarize(&validate_plan(&plan))))
    })?;
    let backends = BackendSet::from_descriptors(&settings.backends).map_err(|e| PipelineError::Config(e.to_string()))?;
    backends.require(settings.mode).map_err(|e| PipelineError::Config(e.to_string()))?;
    let bank = absolute_bank(&plan.bank, &settings.inputs_root);

    // Triage existing shot records.
    let mut statuses: BTreeMap<String, ShotStatus> = BTreeMap::new();
    let mut queue = Vec::new();
    let mut mismatches = Vec::new();
    let mut skipped = 0;
    for id in &order {
        let mut status = read_status(job_dir, id)?.unwrap_or_else(|| ShotStatus::pending(id));
        match status.state {
            ShotState::Done => {
                let result = status.result.as_ref().ok_or_else(|| {
                    PipelineError::CorruptJobDir(format!("{id}: done without a result"))
                })?;
                match verify_artifacts(&shot_dir(job_dir, id), result) {
                    Ok(()) => {
                        skipped += 1;
                        statuses.insert(id.clone(), status);
                        continue;
                    }
                    Err(role) => {
                        log::warn!("{id}: {role} artifact does not match its checksum; re-rendering");
                        status.transition(ShotState::Pending, Some(format!("checksum mismatch: {role}")));
                        write_status(job_dir, &status)?;
                        mismatches.push(id.clone());
                    }
                }
            }
            ShotState::Rendering => {
                status.transition(ShotState::Pending, Some("interrupted while rendering".into()));
                write_status(job_dir, &status)?;
            }
            ShotState::Pending | ShotState::Failed => {}
        }
        queue.push(status);
    }

    let counting = Counting { inner: hooks.observer, by_role: Mutex::new(BTreeMap::new()) };
    let next = AtomicUsize::new(0);
    let finished: Mutex<Vec<ShotStatus>> = Mutex::new(Vec::new());
    let fatal: Mutex<Option<PipelineError>> = Mutex::new(None);
    let render_calls = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let cancelled = || stop.load(Ordering::SeqCst) || hooks.cancel.is_some_and(|c| c.load(Ordering::SeqCst));

    let workers = settings.worker_bound.max(1).min(queue.len().max(1));
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if cancelled() {
                    break;
                }
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(initial) = queue.get(k) else { break };
                let mut status = initial.clone();
                let id = status.shot_id.clone();
                let outcome = (|| -> Result<ShotStatus, PipelineError> {
                    let dir = shot_dir(job_dir, &id);
                    clear_artifacts(&dir)?;
                    status.transition(ShotState::Rendering, None);
                    write_status(job_dir, &status)?;
                    let shot = plan.shot(&id).expect("ordered ids come from the plan");
                    let req = RenderRequest::new(shot, &bank, settings.mode, shot_seed(settings.seed, &id), dir);
                    render_calls.fetch_add(1, Ordering::SeqCst);
                    match render_shot(&req, &backends, &counting) {
                        Ok(result) => {
                            status.transition(ShotState::Done, None);
                            status.result = Some(result);
                        }
                        Err(e) => {
                            log::error!("{id}: {e}");
                            status.transition(ShotState::Failed, Some(e.to_string()));
                            status.error = Some(e.to_string());
                        }
                    }
                    write_status(job_dir, &status)?;
                    Ok(status)
                })();
                match outcome {
                    Ok(status) => {
                        if let Some(cb) = hooks.on_shot {
                            cb(&status);
                        }
                        finished.lock().unwrap().push(status);
                    }
                    Err(e) => {
                        fatal.lock().unwrap().get_or_insert(e);
                        stop.store(true, Ordering::SeqCst);
                    }
                }
            });
        }
    });
    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }

    let finished = finished.into_inner().unwrap();
    let attempted = finished.len();
    let mut failures = Vec::new();
    for status in finished {
        if status.state == ShotState::Failed {
            failures.push((status.shot_id.clone(), status.error.clone().unwrap_or_default()));
        }
        statuses.insert(status.shot_id.clone(), status);
    }
    failures.sort();

    cost.rendering_ms = started.elapsed().as_millis() as u64;
    cost.render_calls = render_calls.into_inner();
    let by_role = counting.by_role.into_inner().unwrap();
    cost.backend_calls = by_role.values().sum();
    cost.backend_calls_by_role = by_role.into_iter().map(|(r, n)| (r.as_str().to_owned(), n)).collect();
    cost.shots_done = statuses.values().filter(|s| s.state == ShotState::Done).count();
    cost.shots_failed = statuses.values().filter(|s| s.state == ShotState::Failed).count();
    cost.shots_skipped = skipped;

    let remaining = queue.len() - attempted;
    if remaining > 0 {
        cost.total_ms = cost.planning_ms + cost.rendering_ms;
        let cost = cost_update(job_dir, &cost)?;
        return Ok(JobOutcome {
            plan,
            manifest: None,
            cost,
            status: JobStatus::Interrupted(remaining),
            failures,
            checksum_mismatches: mismatches,
        });
    }

    let assembly_started = Instant::now();
    let rendered: Vec<RenderedShot> = statuses
        .values()
        .filter_map(|s| {
            let result = s.result.as_ref().filter(|_| s.state == ShotState::Done)?;
            let artifact = result.final_artifact()?;
            Some(RenderedShot {
                shot_id: s.shot_id.clone(),
                artifact: format!("{SHOTS_DIR}/{}/{}", s.shot_id, artifact.path),
                duration: result.duration,
            })
        })
        .collect();
    let manifest = assemble(&plan, &rendered);
    write_atomic(&job_dir.join(MANIFEST_FILE), manifest.to_json().as_bytes())?;
    cost.assembly_ms = assembly_started.elapsed().as_millis() as u64;
    cost.total_ms = cost.planning_ms + started.elapsed().as_millis() as u64;
    let cost = cost_update(job_dir, &cost)?;

    let failed = statuses.values().filter(|s| s.state == ShotState::Failed).count();
    Ok(JobOutcome {
        plan,
        manifest: Some(manifest),
        cost,
        status: if failed == 0 { JobStatus::Complete } else { JobStatus::RenderIncomplete(failed) },
        failures,
        checksum_mismatches: mismatches,
    })
}

/// All shot records of a job in playback order.
pub fn scan_statuses(job_dir: &Path, plan: &MoviePlan) -> Result<Vec<ShotStatus>, PipelineError> {
    let mut out = Vec::new();
    let order = plan_ordering(plan).map_err(|_| PipelineError::CorruptJobDir("plan fails validation".into()))?;
    for id in order {
        out.push(read_status(job_dir, &id)?.unwrap_or_else(|| ShotStatus::pending(&id)));
    }
    Ok(out)
}
