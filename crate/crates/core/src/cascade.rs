//! Director → scene plan → shot plan, producing a complete plan.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::agents::{
    director_decompose, engine_config_digest, scene_plan, shot_plan, AgentConfig, AgentEnv,
    AgentError, AgentKind,
};
use crate::cot::CotTrace;
use crate::model::{scene_id, CharacterBank, MoviePlan, ScriptSynopsis, PLAN_FORMAT_VERSION};
use crate::validate::{validate_plan, ValidationReport};

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeConfig {
    pub director: AgentConfig,
    pub scene_plan: AgentConfig,
    pub shot_plan: AgentConfig,
    /// Provider model label; part of the engine digest.
    pub model_name: String,
    pub created_at: String,
}

impl CascadeConfig {
    pub fn new(model_name: impl Into<String>, created_at: impl Into<String>) -> Self {
        Self {
            director: AgentConfig::default_for(AgentKind::Director),
            scene_plan: AgentConfig::default_for(AgentKind::ScenePlan),
            shot_plan: AgentConfig::default_for(AgentKind::ShotPlan),
            model_name: model_name.into(),
            created_at: created_at.into(),
        }
    }

    pub fn agents(&self) -> [&AgentConfig; 3] {
        [&self.director, &self.scene_plan, &self.shot_plan]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CascadeError {
    #[error("{agent} failed on `{unit}`: {source}")]
    Agent {
        agent: AgentKind,
        unit: String,
        source: AgentError,
    },
    #[error("planned hierarchy is invalid: {}", summarize(.0))]
    InvalidPlan(ValidationReport),
}

impl CascadeError {
    pub fn agent(&self) -> Option<AgentKind> {
        match self {
            CascadeError::Agent { agent, .. } => Some(*agent),
            CascadeError::InvalidPlan(_) => None,
        }
    }
}

fn summarize(report: &ValidationReport) -> String {
    report
        .errors()
        .map(|i| format!("{}: {}", i.locus, i.message))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Trace file references in the order the attempts ran.
pub fn trace_refs(traces: &[CotTrace]) -> Vec<String> {
    traces
        .iter()
        .enumerate()
        .map(|(n, t)| format!("traces/{}", t.file_name(n + 1)))
        .collect()
}

/// Runs the three agents. Scenes are numbered globally across sub-scripts.
/// Traces of every attempt, including failed ones, land in `traces`.
pub fn plan_cascade(
    synopsis: &ScriptSynopsis,
    bank: &CharacterBank,
    env: AgentEnv<'_>,
    cfg: &CascadeConfig,
    traces: &mut Vec<CotTrace>,
) -> Result<MoviePlan, CascadeError> {
    for agent in cfg.agents() {
        agent.validate().map_err(|source| CascadeError::Agent {
            agent: agent.kind,
            unit: "config".into(),
            source,
        })?;
    }
    let fail = |agent: AgentKind, unit: &str| {
        let unit = unit.to_string();
        move |source| CascadeError::Agent { agent, unit, source }
    };

    let sub_scripts = director_decompose(synopsis, bank, env, &cfg.director, traces)
        .map_err(fail(AgentKind::Director, "synopsis"))?;

    let mut scenes = Vec::new();
    for ss in &sub_scripts {
        let local = scene_plan(ss, bank, env, &cfg.scene_plan, traces)
            .map_err(fail(AgentKind::ScenePlan, &ss.id))?;
        for mut scene in local {
            let i = scenes.len() as u32 + 1;
            scene.index = i;
            scene.id = scene_id(i);
            scenes.push(scene);
        }
    }

    let mut shots = Vec::new();
    for scene in &scenes {
        let planned = shot_plan(scene, bank, synopsis.mode, env, &cfg.shot_plan, traces)
            .map_err(fail(AgentKind::ShotPlan, &scene.id))?;
        shots.extend(planned);
    }

    let configs: Vec<AgentConfig> = cfg.agents().into_iter().cloned().collect();
    let plan = MoviePlan {
        format_version: PLAN_FORMAT_VERSION.into(),
        synopsis: synopsis.clone(),
        bank: bank.clone(),
        sub_scripts,
        scenes,
        shots,
        traces: trace_refs(traces),
        created_at: cfg.created_at.clone(),
        engine_config_digest: engine_config_digest(&configs, env.templates, &cfg.model_name),
    };
    let report = validate_plan(&plan);
    if report.has_errors() {
        return Err(CascadeError::InvalidPlan(report));
    }
    Ok(plan)
}
