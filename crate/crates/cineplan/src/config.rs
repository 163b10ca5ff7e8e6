//! Job configuration files (TOML or JSON). Relative paths resolve against
//! the directory holding the file. Secrets are never read from here; the
//! provider token comes from the environment.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use cineplan_core::agents::{AgentConfig, AgentKind};
use cineplan_core::cot::CotStage;
use cineplan_core::media::GenerationMode;
use cineplan_core::model::{CharacterBank, CharacterEntry, ScriptSynopsis, SynopsisMode};
use serde::Deserialize;
use thiserror::Error;

use crate::backend::{BackendDescriptor, Invocation};
use crate::pipeline::{default_mode, AgentConfigs, JobConfig, RenderSettings, DEFAULT_WORKER_BOUND};
use crate::provider::ProviderConfig;

/// Keys that look like credentials and are refused anywhere in a config.
const SECRET_KEYS: [&str; 4] = ["api_key", "apikey", "token", "secret"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("{}: {detail}", path.display())]
    Parse { path: PathBuf, detail: String },
    #[error("{}: `{key}` is not accepted in config files; set the token in the environment variable named by provider.auth_env", path.display())]
    SecretInConfig { path: PathBuf, key: String },
    #[error("input file {} does not exist", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynopsis {
    #[serde(default)]
    title: String,
    body: Option<String>,
    file: Option<PathBuf>,
    #[serde(default)]
    mode: SynopsisMode,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCharacter {
    name: String,
    portrait: String,
    voice: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentOverride {
    stages: Option<Vec<CotStage>>,
    max_units: Option<u32>,
    sampling: Option<f64>,
    max_attempts: Option<u32>,
}

impl AgentOverride {
    fn apply(&self, kind: AgentKind) -> AgentConfig {
        let mut cfg = AgentConfig::default_for(kind);
        if let Some(s) = &self.stages {
            cfg.stages = s.clone();
        }
        if let Some(v) = self.max_units {
            cfg.max_units = v;
        }
        if let Some(v) = self.sampling {
            cfg.sampling = v;
        }
        if let Some(v) = self.max_attempts {
            cfg.max_attempts = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgents {
    #[serde(default)]
    director: AgentOverride,
    #[serde(default)]
    scene_plan: AgentOverride,
    #[serde(default)]
    shot_plan: AgentOverride,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    job_dir: Option<PathBuf>,
    synopsis: RawSynopsis,
    #[serde(default)]
    characters: Vec<RawCharacter>,
    provider: ProviderConfig,
    #[serde(default)]
    agents: RawAgents,
    #[serde(default)]
    backends: Vec<BackendDescriptor>,
    mode: Option<GenerationMode>,
    worker_bound: Option<usize>,
    #[serde(default)]
    seed: u64,
    created_at: Option<String>,
    templates_dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub job_dir: Option<PathBuf>,
    pub mode: Option<GenerationMode>,
    pub worker_bound: Option<usize>,
    pub seed: Option<u64>,
    pub created_at: Option<String>,
}

/// A fully resolved configuration.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub synopsis: ScriptSynopsis,
    pub bank: CharacterBank,
    pub job: JobConfig,
    pub templates_dir: Option<PathBuf>,
}

fn find_secret(value: &serde_json::Value) -> Option<String> {
    match value {
        serde_json::Value::Object(map) => map.iter().find_map(|(k, v)| {
            if SECRET_KEYS.contains(&k.to_ascii_lowercase().as_str()) {
                Some(k.clone())
            } else {
                find_secret(v)
            }
        }),
        serde_json::Value::Array(items) => items.iter().find_map(find_secret),
        _ => None,
    }
}

fn parse_document(path: &Path, text: &str) -> Result<serde_json::Value, ConfigError> {
    let parse_err = |detail: String| ConfigError::Parse { path: path.to_path_buf(), detail };
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))
    } else {
        let value: toml::Value = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        serde_json::to_value(value).map_err(|e| parse_err(e.to_string()))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads and resolves a config file, then applies `overrides`.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<LoadedConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    let doc = parse_document(path, &text)?;
    if let Some(key) = find_secret(&doc) {
        return Err(ConfigError::SecretInConfig { path: path.to_path_buf(), key });
    }
    let raw: RawConfig =
        serde_json::from_value(doc).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), detail: e.to_string() })?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = fs::canonicalize(base).map_err(|source| ConfigError::Read { path: base.to_path_buf(), source })?;

    let body = match (&raw.synopsis.body, &raw.synopsis.file) {
        (Some(b), None) => b.clone(),
        (None, Some(f)) => {
            let f = resolve(&base, f);
            fs::read_to_string(&f).map_err(|e| match e.kind() {
                io::ErrorKind::NotFound => ConfigError::MissingInput(f.clone()),
                _ => ConfigError::Read { path: f.clone(), source: e },
            })?
        }
        _ => return Err(ConfigError::Invalid("synopsis needs exactly one of `body` or `file`".into())),
    };
    let synopsis = ScriptSynopsis { title: raw.synopsis.title.clone(), body, mode: raw.synopsis.mode };
    let bank = CharacterBank::new(
        raw.characters
            .iter()
            .map(|c| CharacterEntry { name: c.name.clone(), portrait_ref: c.portrait.clone(), voice_ref: c.voice.clone() })
            .collect(),
    );

    let mut provider = raw.provider.clone();
    provider.fixtures = provider.fixtures.map(|p| resolve(&base, &p));
    provider.record_to = provider.record_to.map(|p| resolve(&base, &p));

    let mut backends = raw.backends.clone();
    if backends.is_empty() {
        backends.push(BackendDescriptor::mock("mock"));
    }
    for b in &mut backends {
        if let Invocation::Command { program, .. } = &mut b.invocation {
            // bare names are looked up on PATH
            if program.components().count() > 1 {
                *program = resolve(&base, program);
            }
        }
    }

    let job_dir = overrides
        .job_dir
        .clone()
        .or_else(|| raw.job_dir.as_ref().map(|p| resolve(&base, p)))
        .ok_or_else(|| ConfigError::Invalid("no job_dir in config or on the command line".into()))?;
    let mode = overrides.mode.or(raw.mode).unwrap_or_else(|| default_mode(synopsis.mode));
    let job = JobConfig {
        job_dir,
        provider,
        agents: AgentConfigs {
            director: raw.agents.director.apply(AgentKind::Director),
            scene_plan: raw.agents.scene_plan.apply(AgentKind::ScenePlan),
            shot_plan: raw.agents.shot_plan.apply(AgentKind::ShotPlan),
        },
        render: RenderSettings {
            mode,
            worker_bound: overrides.worker_bound.or(raw.worker_bound).unwrap_or(DEFAULT_WORKER_BOUND),
            seed: overrides.seed.unwrap_or(raw.seed),
            backends,
            inputs_root: base.clone(),
        },
        created_at: overrides.created_at.clone().or(raw.created_at.clone()),
    };
    job.validate(&synopsis).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(LoadedConfig {
        path: path.to_path_buf(),
        synopsis,
        bank,
        job,
        templates_dir: raw.templates_dir.as_ref().map(|p| resolve(&base, p)),
    })
}
