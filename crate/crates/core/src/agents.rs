//! The three planning agents: director, scene planner and shot planner.
//!
//! Each agent is a configured run of the staged reasoning engine whose last
//! stage must yield a `units` array matching the agent's output contract.
//! One conversation per parent unit yields all of its children.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::cot::{
    check_stage_set, run_internal_cot, Clock, CotError, CotRequest, CotStage, CotTrace,
    LlmProvider, Payload, TemplateSet, DEFAULT_MAX_ATTEMPTS,
};
use crate::model::{
    scene_id, shot_id, sub_script_id, CameraMovement, CharacterBank, Scene, ScriptSynopsis, Shot,
    ShotType, SubScript, SubtitleLine, SynopsisMode, DEFAULT_SHOT_SECONDS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Director,
    ScenePlan,
    ShotPlan,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Director, AgentKind::ScenePlan, AgentKind::ShotPlan];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Director => "director",
            AgentKind::ScenePlan => "scene_plan",
            AgentKind::ShotPlan => "shot_plan",
        }
    }

    /// Default stage assignment.
    pub fn default_stages(self) -> Vec<CotStage> {
        use CotStage::*;
        match self {
            AgentKind::Director => vec![NarrativeStructureAnalysis, KeyElementExtraction, DefineBoundaries],
            AgentKind::ScenePlan => vec![
                NarrativeStructureAnalysis,
                KeyElementExtraction,
                DefineBoundaries,
                CinematicEmotionalEnhancement,
            ],
            AgentKind::ShotPlan => vec![
                KeyElementExtraction,
                CinematicEmotionalEnhancement,
                TechnicalCinematicPlanning,
            ],
        }
    }

    /// Context keys the agent supplies to its templates.
    pub fn context_keys(self) -> &'static [&'static str] {
        match self {
            AgentKind::Director => &["synopsis_title", "synopsis", "characters", "max_units"],
            AgentKind::ScenePlan => &["sub_script", "characters", "max_units"],
            AgentKind::ShotPlan => &["scene", "characters", "max_units", "mode"],
        }
    }

    /// Default soft cap on produced units: sub-scripts, scenes per
    /// sub-script, shots per scene.
    pub fn default_max_units(self) -> u32 {
        match self {
            AgentKind::Director => 8,
            AgentKind::ScenePlan => 6,
            AgentKind::ShotPlan => 10,
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub stages: Vec<CotStage>,
    pub max_units: u32,
    /// Sampling hint in `[0, 1]`, forwarded to the provider.
    #[serde(default)]
    pub sampling: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

fn default_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}

impl AgentConfig {
    pub fn default_for(kind: AgentKind) -> Self {
        Self {
            kind,
            stages: kind.default_stages(),
            max_units: kind.default_max_units(),
            sampling: 0.0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }

    pub fn with_max_units(mut self, max_units: u32) -> Self {
        self.max_units = max_units;
        self
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let invalid = |msg: String| Err(AgentError::InvalidConfig(msg));
        if let Err(e) = check_stage_set(&self.stages) {
            return invalid(format!("{}: {e}", self.kind));
        }
        let last = *self.stages.last().expect("non-empty");
        if !last.output_keys().contains(&"units") {
            return invalid(format!("{}: last stage `{last}` does not produce units", self.kind));
        }
        if self.max_units == 0 {
            return invalid(format!("{}: max_units must be at least 1", self.kind));
        }
        if !(0.0..=1.0).contains(&self.sampling) {
            return invalid(format!("{}: sampling must lie in [0, 1]", self.kind));
        }
        if self.max_attempts == 0 {
            return invalid(format!("{}: max_attempts must be at least 1", self.kind));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error(transparent)]
    Cot(#[from] CotError),
    #[error("{0} returned zero units")]
    EmptyDecomposition(AgentKind),
    #[error("character `{0}` speaks but has no voice sample")]
    MissingVoiceSample(String),
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
}

/// Shared collaborators of every agent invocation.
#[derive(Clone, Copy)]
pub struct AgentEnv<'a> {
    pub provider: &'a dyn LlmProvider,
    pub templates: &'a TemplateSet,
    pub clock: &'a dyn Clock,
}

#[derive(Debug, Deserialize)]
struct SubScriptUnit {
    #[serde(default)]
    title: String,
    summary: String,
    #[serde(default)]
    characters: Vec<String>,
    rationale: String,
}

#[derive(Debug, Deserialize)]
struct SceneUnit {
    #[serde(default)]
    title: String,
    plot: String,
    #[serde(default)]
    characters: Vec<String>,
    emotional_tone: String,
    visual_style: String,
    cinematography_notes: String,
    boundary_rationale: String,
}

#[derive(Debug, Deserialize)]
struct ShotUnit {
    plot: String,
    #[serde(default)]
    characters: Vec<String>,
    shot_type: String,
    camera_movement: String,
    lighting: String,
    #[serde(default)]
    subtitles: Vec<SubtitleLine>,
    #[serde(default)]
    continuity_notes: String,
    rationale: String,
    #[serde(default)]
    duration_hint: Option<f64>,
}

trait Unit: DeserializeOwned {
    /// Non-empty requirements beyond the serde shape.
    fn check(&self) -> Result<(), String>;
    /// Folds a later unit into this one when the cap is exceeded.
    fn absorb(&mut self, other: Self);
}

fn require(field: &str, value: &str) -> Result<(), String> {
    if value.trim().is_empty() {
        Err(format!("field `{field}` is empty"))
    } else {
        Ok(())
    }
}

fn join(a: &mut String, b: &str) {
    if b.trim().is_empty() {
        return;
    }
    if !a.is_empty() {
        a.push(' ');
    }
    a.push_str(b);
}

fn union(a: &mut Vec<String>, b: Vec<String>) {
    for name in b {
        if !a.contains(&name) {
            a.push(name);
        }
    }
}

impl Unit for SubScriptUnit {
    fn check(&self) -> Result<(), String> {
        require("summary", &self.summary)?;
        require("rationale", &self.rationale)
    }

    fn absorb(&mut self, other: Self) {
        join(&mut self.summary, &other.summary);
        union(&mut self.characters, other.characters);
        join(&mut self.rationale, &other.rationale);
    }
}

impl Unit for SceneUnit {
    fn check(&self) -> Result<(), String> {
        require("plot", &self.plot)?;
        require("emotional_tone", &self.emotional_tone)?;
        require("boundary_rationale", &self.boundary_rationale)
    }

    fn absorb(&mut self, other: Self) {
        join(&mut self.plot, &other.plot);
        union(&mut self.characters, other.characters);
        join(&mut self.cinematography_notes, &other.cinematography_notes);
        join(&mut self.boundary_rationale, &other.boundary_rationale);
    }
}

impl Unit for ShotUnit {
    fn check(&self) -> Result<(), String> {
        require("shot_type", &self.shot_type)?;
        require("camera_movement", &self.camera_movement)?;
        require("lighting", &self.lighting)?;
        require("rationale", &self.rationale)?;
        for sub in &self.subtitles {
            require("subtitles.line", &sub.line)?;
            if !self.characters.contains(&sub.character) {
                return Err(format!(
                    "subtitle speaker `{}` is not among the shot's characters",
                    sub.character
                ));
            }
        }
        match self.duration_hint {
            Some(d) if !(d.is_finite() && d > 0.0) => {
                Err(format!("duration_hint {d} is not a positive number"))
            }
            _ => Ok(()),
        }
    }

    fn absorb(&mut self, other: Self) {
        join(&mut self.plot, &other.plot);
        union(&mut self.characters, other.characters);
        self.subtitles.extend(other.subtitles);
        join(&mut self.continuity_notes, &other.continuity_notes);
        join(&mut self.rationale, &other.rationale);
        let total = self.duration_hint.unwrap_or(DEFAULT_SHOT_SECONDS)
            + other.duration_hint.unwrap_or(DEFAULT_SHOT_SECONDS);
        self.duration_hint = Some(total);
    }
}

fn units_of<U: Unit>(payload: &Payload) -> Result<Vec<U>, String> {
    let units = payload.get("units").cloned().unwrap_or(Value::Null);
    let units: Vec<U> =
        serde_json::from_value(units).map_err(|e| format!("units do not match contract: {e}"))?;
    for (n, unit) in units.iter().enumerate() {
        unit.check().map_err(|e| format!("unit {}: {e}", n + 1))?;
    }
    Ok(units)
}

/// Runs the agent's stages and returns its units, capped at `max_units`.
/// Overflowing units are folded into the last kept one.
fn run_agent<U: Unit>(
    cfg: &AgentConfig,
    unit: &str,
    abstract_text: &str,
    context: Payload,
    env: AgentEnv<'_>,
    traces: &mut Vec<CotTrace>,
) -> Result<Vec<U>, AgentError> {
    cfg.validate()?;
    let final_stage = *cfg.stages.last().expect("validated");
    let check = move |stage: CotStage, payload: &Payload| -> Result<(), String> {
        if stage == final_stage {
            units_of::<U>(payload).map(|_| ())
        } else {
            Ok(())
        }
    };
    let payload = run_internal_cot(
        CotRequest {
            agent_kind: cfg.kind.as_str(),
            unit,
            abstract_text,
            stages: &cfg.stages,
            context,
            max_attempts: cfg.max_attempts,
            sampling: cfg.sampling,
        },
        env.templates,
        env.provider,
        env.clock,
        &check,
        traces,
    )?;
    let mut units = units_of::<U>(&payload).map_err(|detail| {
        AgentError::Cot(CotError::StageParseExhausted {
            stage: final_stage,
            attempts: cfg.max_attempts,
            last_error: crate::cot::ParseError::SchemaMismatch(detail),
        })
    })?;
    if units.is_empty() {
        return Err(AgentError::EmptyDecomposition(cfg.kind));
    }
    let cap = cfg.max_units as usize;
    if units.len() > cap {
        let overflow = units.split_off(cap);
        let last = units.last_mut().expect("cap >= 1");
        for extra in overflow {
            last.absorb(extra);
        }
    }
    Ok(units)
}

fn names(bank: &CharacterBank) -> Value {
    Value::Array(bank.names().map(|n| Value::String(n.to_owned())).collect())
}

/// Splits a synopsis into sub-scripts `ss_001..ss_K`.
pub fn director_decompose(
    synopsis: &ScriptSynopsis,
    bank: &CharacterBank,
    env: AgentEnv<'_>,
    cfg: &AgentConfig,
    traces: &mut Vec<CotTrace>,
) -> Result<Vec<SubScript>, AgentError> {
    let mut context = Payload::new();
    context.insert("synopsis_title".into(), json!(synopsis.title));
    context.insert("synopsis".into(), json!(synopsis.body));
    context.insert("characters".into(), names(bank));
    context.insert("max_units".into(), json!(cfg.max_units));

    let mut units: Vec<SubScriptUnit> =
        run_agent(cfg, "synopsis", &synopsis.body, context, env, traces)?;
    if units.len() == 1 {
        units[0].summary = synopsis.body.trim().to_owned();
    }
    Ok(units
        .into_iter()
        .zip(1u32..)
        .map(|(u, p)| SubScript {
            id: sub_script_id(p),
            index: p,
            title: u.title,
            summary: u.summary,
            characters: u.characters,
            rationale: u.rationale,
        })
        .collect())
}

/// Refines one sub-script into scenes.
///
/// Scenes come back indexed `1..n` locally; the caller renumbers them
/// globally across sub-scripts.
pub fn scene_plan(
    sub_script: &SubScript,
    bank: &CharacterBank,
    env: AgentEnv<'_>,
    cfg: &AgentConfig,
    traces: &mut Vec<CotTrace>,
) -> Result<Vec<Scene>, AgentError> {
    let mut context = Payload::new();
    context.insert(
        "sub_script".into(),
        serde_json::to_value(sub_script).expect("sub-script serializes"),
    );
    context.insert("characters".into(), names(bank));
    context.insert("max_units".into(), json!(cfg.max_units));

    let mut units: Vec<SceneUnit> =
        run_agent(cfg, &sub_script.id, &sub_script.summary, context, env, traces)?;
    if units.len() == 1 {
        units[0].plot = sub_script.summary.trim().to_owned();
    }
    Ok(units
        .into_iter()
        .zip(1u32..)
        .map(|(u, i)| Scene {
            id: scene_id(i),
            sub_script_id: sub_script.id.clone(),
            index: i,
            title: u.title,
            plot: u.plot,
            characters: u.characters,
            emotional_tone: u.emotional_tone,
            visual_style: u.visual_style,
            cinematography_notes: u.cinematography_notes,
            boundary_rationale: u.boundary_rationale,
        })
        .collect())
}

/// Breaks one scene into shots `sc_iii/sh_001..`.
///
/// In joint mode every speaking character must have a voice sample.
pub fn shot_plan(
    scene: &Scene,
    bank: &CharacterBank,
    mode: SynopsisMode,
    env: AgentEnv<'_>,
    cfg: &AgentConfig,
    traces: &mut Vec<CotTrace>,
) -> Result<Vec<Shot>, AgentError> {
    let mut context = Payload::new();
    context.insert(
        "scene".into(),
        serde_json::to_value(scene).expect("scene serializes"),
    );
    context.insert("characters".into(), names(bank));
    context.insert("max_units".into(), json!(cfg.max_units));
    context.insert("mode".into(), json!(mode.as_str()));

    let mut units: Vec<ShotUnit> = run_agent(cfg, &scene.id, &scene.plot, context, env, traces)?;
    if units.len() == 1 {
        units[0].plot = scene.plot.trim().to_owned();
    }
    if mode.is_joint() {
        for speaker in units.iter().flat_map(|u| u.subtitles.iter()) {
            let voiced = bank
                .get(&speaker.character)
                .is_some_and(|e| e.voice_ref.is_some());
            if !voiced {
                return Err(AgentError::MissingVoiceSample(speaker.character.clone()));
            }
        }
    }
    Ok(units
        .into_iter()
        .zip(1u32..)
        .map(|(u, j)| Shot {
            id: shot_id(scene.index, j),
            scene_id: scene.id.clone(),
            index: j,
            plot: u.plot,
            characters: u.characters,
            shot_type: ShotType::parse(&u.shot_type),
            camera_movement: CameraMovement::parse(&u.camera_movement),
            lighting: u.lighting,
            subtitles: u.subtitles,
            continuity_notes: u.continuity_notes,
            rationale: u.rationale,
            duration_hint: u.duration_hint.unwrap_or(DEFAULT_SHOT_SECONDS),
        })
        .collect())
}

/// Digest of everything that shapes planning output besides the provider's
/// answers: agent configs, templates and the model label.
pub fn engine_config_digest(configs: &[AgentConfig], templates: &TemplateSet, model_name: &str) -> String {
    let doc = json!({
        "agents": configs,
        "templates": templates.digest(),
        "model": model_name,
    });
    crate::digest::sha256_hex(doc.to_string().as_bytes())
}
