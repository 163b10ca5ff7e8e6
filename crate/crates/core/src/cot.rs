//! Staged internal chain-of-thought.
//!
//! An agent runs an ordered subset of the five [`CotStage`]s. Each stage is
//! one provider conversation: a prompt rendered from the stage template and
//! the running context, answered with free-text reasoning followed by a
//! fenced `plan-json` block. The block is parsed, checked against the stage
//! schema, and merged into the context handed to the next stage. Every
//! attempt, successful or not, leaves a [`CotTrace`].

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::digest::sha256_hex;

pub type Payload = Map<String, Value>;

pub const BLOCK_OPEN: &str = "```plan-json";
pub const BLOCK_CLOSE: &str = "```";
pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CotStage {
    NarrativeStructureAnalysis,
    KeyElementExtraction,
    DefineBoundaries,
    CinematicEmotionalEnhancement,
    TechnicalCinematicPlanning,
}

impl CotStage {
    pub const ALL: [CotStage; 5] = [
        CotStage::NarrativeStructureAnalysis,
        CotStage::KeyElementExtraction,
        CotStage::DefineBoundaries,
        CotStage::CinematicEmotionalEnhancement,
        CotStage::TechnicalCinematicPlanning,
    ];

    /// 1-based position in the fixed stage order.
    pub fn ordinal(self) -> u8 {
        match self {
            CotStage::NarrativeStructureAnalysis => 1,
            CotStage::KeyElementExtraction => 2,
            CotStage::DefineBoundaries => 3,
            CotStage::CinematicEmotionalEnhancement => 4,
            CotStage::TechnicalCinematicPlanning => 5,
        }
    }

    pub fn from_ordinal(n: u8) -> Option<Self> {
        Self::ALL.get(usize::from(n).checked_sub(1)?).copied()
    }

    pub fn slug(self) -> &'static str {
        match self {
            CotStage::NarrativeStructureAnalysis => "narrative_structure_analysis",
            CotStage::KeyElementExtraction => "key_element_extraction",
            CotStage::DefineBoundaries => "define_boundaries",
            CotStage::CinematicEmotionalEnhancement => "cinematic_emotional_enhancement",
            CotStage::TechnicalCinematicPlanning => "technical_cinematic_planning",
        }
    }

    pub fn from_slug(slug: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.slug() == slug)
    }

    pub fn heading(self) -> &'static str {
        match self {
            CotStage::NarrativeStructureAnalysis => "Narrative Structure Analysis",
            CotStage::KeyElementExtraction => "Key Element Extraction",
            CotStage::DefineBoundaries => "Define Boundaries & Structural Units",
            CotStage::CinematicEmotionalEnhancement => "Cinematic & Emotional Enhancement",
            CotStage::TechnicalCinematicPlanning => "Technical Cinematic Planning",
        }
    }

    pub fn goal(self) -> &'static str {
        match self {
            CotStage::NarrativeStructureAnalysis => {
                "Map the story's major plot points, its emotional beats and the interactions between characters."
            }
            CotStage::KeyElementExtraction => {
                "List the characters, events and emotional stakes that the next steps must not lose."
            }
            CotStage::DefineBoundaries => {
                "Cut the material into self-contained units, each with a clear start, end and a reason for the cut."
            }
            CotStage::CinematicEmotionalEnhancement => {
                "Give every unit its visual style, emotional tone, lighting, props and sound."
            }
            CotStage::TechnicalCinematicPlanning => {
                "Fix camera movement, framing, character placement and dialogue for every unit."
            }
        }
    }

    /// Keys the stage's structured block must contain.
    pub fn output_keys(self) -> &'static [&'static str] {
        match self {
            CotStage::NarrativeStructureAnalysis => {
                &["plot_points", "emotional_beats", "character_interactions"]
            }
            CotStage::KeyElementExtraction => {
                &["key_characters", "key_events", "emotional_significance"]
            }
            CotStage::DefineBoundaries
            | CotStage::CinematicEmotionalEnhancement
            | CotStage::TechnicalCinematicPlanning => &["units"],
        }
    }
}

impl fmt::Display for CotStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl Serialize for CotStage {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.slug())
    }
}

impl<'de> Deserialize<'de> for CotStage {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        CotStage::from_slug(&raw)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown stage `{raw}`")))
    }
}

/// Non-empty and strictly increasing in stage order.
pub fn check_stage_set(stages: &[CotStage]) -> Result<(), CotError> {
    if stages.is_empty() {
        return Err(CotError::EmptyStageSet);
    }
    if stages.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CotError::StageOrder);
    }
    Ok(())
}

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

/// SHA-256 of the canonical JSON form of the message list.
///
/// Only roles and contents participate, so the digest is stable across
/// runs and machines.
pub fn request_digest(messages: &[ChatMessage]) -> String {
    let canonical = serde_json::to_vec(messages).expect("messages serialize");
    sha256_hex(&canonical)
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ProviderError {
    #[error("no fixture for request {0}")]
    FixtureMiss(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
}

/// A chat-completion backend. Responses are whole messages.
pub trait LlmProvider {
    fn complete(&self, messages: &[ChatMessage], sampling: f64) -> Result<String, ProviderError>;
}

impl<P: LlmProvider + ?Sized> LlmProvider for &P {
    fn complete(&self, messages: &[ChatMessage], sampling: f64) -> Result<String, ProviderError> {
        (**self).complete(messages, sampling)
    }
}

impl<P: LlmProvider + ?Sized> LlmProvider for alloc::sync::Arc<P> {
    fn complete(&self, messages: &[ChatMessage], sampling: f64) -> Result<String, ProviderError> {
        (**self).complete(messages, sampling)
    }
}

/// Millisecond clock used for trace timings.
pub trait Clock {
    fn now_ms(&self) -> u64;
}

/// Clock frozen at zero; traces get `elapsed_ms = 0`.
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_ms(&self) -> u64 {
        0
    }
}

/// Routing keys carried on the first line of every system message so that
/// scripted providers can answer without understanding the prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub agent_kind: String,
    pub unit: String,
    pub stage: CotStage,
    pub attempt: u32,
}

const ROUTE_PREFIX: &str = "route:";

impl Route {
    pub fn header(&self) -> String {
        format!(
            "{ROUTE_PREFIX} agent={} unit={} stage={} attempt={}",
            self.agent_kind, self.unit, self.stage, self.attempt
        )
    }

    /// Reads the route from the first system message, if any.
    pub fn from_messages(messages: &[ChatMessage]) -> Option<Self> {
        let system = messages.iter().find(|m| m.role == Role::System)?;
        let line = system.content.lines().next()?.strip_prefix(ROUTE_PREFIX)?;
        let mut fields = BTreeMap::new();
        for part in line.split_whitespace() {
            let (k, v) = part.split_once('=')?;
            fields.insert(k, v);
        }
        Some(Route {
            agent_kind: (*fields.get("agent")?).to_owned(),
            unit: (*fields.get("unit")?).to_owned(),
            stage: CotStage::from_slug(fields.get("stage")?)?,
            attempt: fields.get("attempt")?.parse().ok()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ParseError {
    #[error("response contains no ```plan-json block")]
    NoStructuredBlock,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CotError {
    #[error("stage set is empty")]
    EmptyStageSet,
    #[error("stage set is not in stage order")]
    StageOrder,
    #[error("context is missing key `{0}`")]
    MissingContextKey(String),
    #[error("no template for agent `{agent_kind}` stage `{stage}`")]
    MissingTemplate { agent_kind: String, stage: CotStage },
    #[error("stage `{stage}` gave no usable output after {attempts} attempt(s): {last_error}")]
    StageParseExhausted {
        stage: CotStage,
        attempts: u32,
        last_error: ParseError,
    },
    #[error("provider failed during stage `{stage}`: {source}")]
    ProviderFailure { stage: CotStage, source: ProviderError },
}

/// Returns the body of the last complete `plan-json` fenced block.
pub fn extract_structured_block(raw: &str) -> Option<String> {
    let mut last = None;
    let mut current: Option<Vec<&str>> = None;
    for line in raw.lines() {
        let trimmed = line.trim();
        match current.as_mut() {
            None if trimmed == BLOCK_OPEN => current = Some(Vec::new()),
            None => {}
            Some(_) if trimmed == BLOCK_CLOSE => {
                last = current.take().map(|body| body.join("\n"));
            }
            Some(body) => body.push(line),
        }
    }
    last
}

/// Extracts the authoritative structured block and checks the stage schema.
pub fn parse_stage_output(stage: CotStage, raw: &str) -> Result<Payload, ParseError> {
    let block = extract_structured_block(raw).ok_or(ParseError::NoStructuredBlock)?;
    let value: Value = serde_json::from_str(&block)
        .map_err(|e| ParseError::SchemaMismatch(format!("invalid JSON: {e}")))?;
    let Value::Object(payload) = value else {
        return Err(ParseError::SchemaMismatch("block is not a JSON object".into()));
    };
    for key in stage.output_keys() {
        match payload.get(*key) {
            None => return Err(ParseError::SchemaMismatch(format!("missing key `{key}`"))),
            Some(v) if *key == "units" && !v.is_array() => {
                return Err(ParseError::SchemaMismatch("`units` must be an array".into()))
            }
            Some(_) => {}
        }
    }
    Ok(payload)
}

/// Stage prompt templates keyed by `(agent_kind, stage)`, plus one system
/// preamble per agent kind.
///
/// Templates use `{{key}}` or `{{key.field}}` placeholders resolved against
/// the context; every placeholder's top-level key is required.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateSet {
    systems: BTreeMap<String, String>,
    stages: BTreeMap<(String, CotStage), String>,
}

macro_rules! builtin {
    ($agent:literal, $file:literal) => {
        include_str!(concat!("../templates/", $agent, "/", $file, ".txt"))
    };
}

impl TemplateSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The templates shipped with the engine for all three agents.
    pub fn builtin() -> Self {
        let mut set = Self::empty();
        set.set_system("director", builtin!("director", "system"));
        set.set_system("scene_plan", builtin!("scene_plan", "system"));
        set.set_system("shot_plan", builtin!("shot_plan", "system"));
        let stages: [(&str, CotStage, &str); 10] = [
            ("director", CotStage::NarrativeStructureAnalysis, builtin!("director", "narrative_structure_analysis")),
            ("director", CotStage::KeyElementExtraction, builtin!("director", "key_element_extraction")),
            ("director", CotStage::DefineBoundaries, builtin!("director", "define_boundaries")),
            ("scene_plan", CotStage::NarrativeStructureAnalysis, builtin!("scene_plan", "narrative_structure_analysis")),
            ("scene_plan", CotStage::KeyElementExtraction, builtin!("scene_plan", "key_element_extraction")),
            ("scene_plan", CotStage::DefineBoundaries, builtin!("scene_plan", "define_boundaries")),
            ("scene_plan", CotStage::CinematicEmotionalEnhancement, builtin!("scene_plan", "cinematic_emotional_enhancement")),
            ("shot_plan", CotStage::KeyElementExtraction, builtin!("shot_plan", "key_element_extraction")),
            ("shot_plan", CotStage::CinematicEmotionalEnhancement, builtin!("shot_plan", "cinematic_emotional_enhancement")),
            ("shot_plan", CotStage::TechnicalCinematicPlanning, builtin!("shot_plan", "technical_cinematic_planning")),
        ];
        for (agent, stage, text) in stages {
            set.set_stage(agent, stage, text);
        }
        set
    }

    pub fn set_system(&mut self, agent_kind: &str, text: &str) {
        self.systems.insert(agent_kind.to_owned(), text.to_owned());
    }

    pub fn set_stage(&mut self, agent_kind: &str, stage: CotStage, text: &str) {
        self.stages.insert((agent_kind.to_owned(), stage), text.to_owned());
    }

    pub fn system(&self, agent_kind: &str) -> Option<&str> {
        self.systems.get(agent_kind).map(String::as_str)
    }

    pub fn stage(&self, agent_kind: &str, stage: CotStage) -> Option<&str> {
        self.stages
            .get(&(agent_kind.to_owned(), stage))
            .map(String::as_str)
    }

    /// Digest over every template, in key order.
    pub fn digest(&self) -> String {
        let mut buf = String::new();
        for (agent, text) in &self.systems {
            buf.push_str(&format!("system/{agent}\n{text}\n\0"));
        }
        for ((agent, stage), text) in &self.stages {
            buf.push_str(&format!("{agent}/{stage}\n{text}\n\0"));
        }
        sha256_hex(buf.as_bytes())
    }

    /// Renders the user prompt for one stage.
    ///
    /// Deterministic: identical inputs yield byte-identical prompts.
    pub fn render_stage_prompt(
        &self,
        stage: CotStage,
        agent_kind: &str,
        context: &Payload,
    ) -> Result<String, CotError> {
        let template = self.stage(agent_kind, stage).ok_or_else(|| CotError::MissingTemplate {
            agent_kind: agent_kind.to_owned(),
            stage,
        })?;
        let body = substitute(template, context)?;
        let keys = stage
            .output_keys()
            .iter()
            .map(|k| format!("`{k}`"))
            .collect::<Vec<_>>()
            .join(", ");
        let context_json = serde_json::to_string_pretty(context).expect("context serializes");
        Ok(format!(
            "## Stage {}/5: {}\nGoal: {}\n\n{}\n\nContext so far:\n```json\n{}\n```\n\n\
             Reason step by step first. Then finish with exactly one block that opens with a line \
             {} and closes with a line {}, holding a single JSON object with the keys {}.\n",
            stage.ordinal(),
            stage.heading(),
            stage.goal(),
            body.trim_end(),
            context_json,
            BLOCK_OPEN,
            BLOCK_CLOSE,
            keys,
        ))
    }
}

/// Top-level context keys a template refers to, in first-use order.
pub fn template_keys(template: &str) -> Vec<String> {
    let mut keys: Vec<String> = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else { break };
        let path = after[..end].trim();
        let top = path.split('.').next().unwrap_or(path).to_owned();
        if !keys.contains(&top) {
            keys.push(top);
        }
        rest = &after[end + 2..];
    }
    keys
}

fn lookup<'a>(context: &'a Payload, path: &str) -> Option<&'a Value> {
    let mut parts = path.split('.');
    let mut value = context.get(parts.next()?)?;
    for part in parts {
        value = value.get(part)?;
    }
    Some(value)
}

fn substitute(template: &str, context: &Payload) -> Result<String, CotError> {
    for key in template_keys(template) {
        if !context.contains_key(&key) {
            return Err(CotError::MissingContextKey(key));
        }
    }
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let path = after[..end].trim();
        let value =
            lookup(context, path).ok_or_else(|| CotError::MissingContextKey(path.to_owned()))?;
        match value {
            Value::String(s) => out.push_str(s),
            other => out.push_str(&serde_json::to_string(other).expect("value serializes")),
        }
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Record of one stage attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotTrace {
    pub agent_kind: String,
    /// The parent unit the agent is decomposing (`synopsis`, `ss_001`, `sc_003`).
    pub unit: String,
    pub stage: CotStage,
    pub prompt_digest: String,
    pub raw_response: String,
    /// Present iff the attempt's output parsed and passed all checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted: Option<Payload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub attempt: u32,
    pub elapsed_ms: u64,
}

impl CotTrace {
    pub fn succeeded(&self) -> bool {
        self.extracted.is_some()
    }

    /// File name under `traces/` for this attempt.
    pub fn file_name(&self, seq: usize) -> String {
        format!(
            "{seq:03}-{}-{}-{}-a{}.json",
            self.agent_kind,
            self.unit,
            self.stage.slug(),
            self.attempt
        )
    }
}

/// Everything one run of the staged reasoning needs.
pub struct CotRequest<'a> {
    pub agent_kind: &'a str,
    pub unit: &'a str,
    /// The abstract being reasoned about; exposed to templates as `abstract`.
    pub abstract_text: &'a str,
    pub stages: &'a [CotStage],
    pub context: Payload,
    pub max_attempts: u32,
    pub sampling: f64,
}

/// Extra acceptance check run on a stage payload after schema parsing;
/// agents use it to enforce their typed output contract.
pub type PayloadCheck<'a> = &'a dyn Fn(CotStage, &Payload) -> Result<(), String>;

pub fn accept_any(_: CotStage, _: &Payload) -> Result<(), String> {
    Ok(())
}

fn repair_instruction(stage: CotStage, error: &ParseError) -> String {
    let keys = stage.output_keys().join(", ");
    format!(
        "Your previous answer could not be used: {error}. Answer again, ending with one \
         {BLOCK_OPEN} block containing a single JSON object with the keys: {keys}."
    )
}

/// Runs the stages in order and returns the merged payload of all stage
/// outputs. Traces for every attempt are appended to `traces`, including
/// those of a failing run.
pub fn run_internal_cot(
    request: CotRequest<'_>,
    templates: &TemplateSet,
    provider: &dyn LlmProvider,
    clock: &dyn Clock,
    check: PayloadCheck<'_>,
    traces: &mut Vec<CotTrace>,
) -> Result<Payload, CotError> {
    check_stage_set(request.stages)?;
    let max_attempts = request.max_attempts.max(1);
    let mut context = request.context;
    context
        .entry("abstract")
        .or_insert_with(|| Value::String(request.abstract_text.to_owned()));
    let preamble = templates.system(request.agent_kind).unwrap_or("");
    let mut merged = Payload::new();

    for &stage in request.stages {
        let prompt = templates.render_stage_prompt(stage, request.agent_kind, &context)?;
        let mut conversation = Vec::new();
        let mut last_error = ParseError::NoStructuredBlock;
        let mut accepted = None;

        for attempt in 1..=max_attempts {
            let route = Route {
                agent_kind: request.agent_kind.to_owned(),
                unit: request.unit.to_owned(),
                stage,
                attempt,
            };
            let mut messages = Vec::with_capacity(2 + conversation.len());
            messages.push(ChatMessage::system(format!("{}\n{}", route.header(), preamble)));
            messages.push(ChatMessage::user(prompt.clone()));
            messages.extend(conversation.iter().cloned());

            let started = clock.now_ms();
            let outcome = provider.complete(&messages, request.sampling);
            let elapsed_ms = clock.now_ms().saturating_sub(started);
            let mut trace = CotTrace {
                agent_kind: request.agent_kind.to_owned(),
                unit: request.unit.to_owned(),
                stage,
                prompt_digest: request_digest(&messages),
                raw_response: String::new(),
                extracted: None,
                error: None,
                attempt,
                elapsed_ms,
            };

            let raw = match outcome {
                Ok(raw) => raw,
                Err(source) => {
                    trace.error = Some(source.to_string());
                    traces.push(trace);
                    return Err(CotError::ProviderFailure { stage, source });
                }
            };
            trace.raw_response = raw.clone();

            let parsed = parse_stage_output(stage, &raw)
                .and_then(|payload| check(stage, &payload).map(|()| payload).map_err(ParseError::SchemaMismatch));
            match parsed {
                Ok(payload) => {
                    trace.extracted = Some(payload.clone());
                    traces.push(trace);
                    accepted = Some(payload);
                    break;
                }
                Err(err) => {
                    trace.error = Some(err.to_string());
                    traces.push(trace);
                    conversation.push(ChatMessage::assistant(raw));
                    conversation.push(ChatMessage::user(repair_instruction(stage, &err)));
                    last_error = err;
                }
            }
        }

        let Some(payload) = accepted else {
            return Err(CotError::StageParseExhausted {
                stage,
                attempts: max_attempts,
                last_error,
            });
        };
        for (key, value) in payload {
            context.insert(key.clone(), value.clone());
            merged.insert(key, value);
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::cell::RefCell;
    use serde_json::json;

    fn block(v: Value) -> String {
        format!("Some reasoning first.\n{BLOCK_OPEN}\n{v}\n{BLOCK_CLOSE}\n")
    }

    #[test]
    fn stage_order_is_fixed() {
        let ords: Vec<u8> = CotStage::ALL.iter().map(|s| s.ordinal()).collect();
        assert_eq!(ords, vec![1, 2, 3, 4, 5]);
        for s in CotStage::ALL {
            assert_eq!(CotStage::from_slug(s.slug()), Some(s));
            assert_eq!(CotStage::from_ordinal(s.ordinal()), Some(s));
        }
    }

    #[test]
    fn stage_sets_must_be_nonempty_and_ordered() {
        assert_eq!(check_stage_set(&[]), Err(CotError::EmptyStageSet));
        assert_eq!(
            check_stage_set(&[CotStage::DefineBoundaries, CotStage::KeyElementExtraction]),
            Err(CotError::StageOrder)
        );
        assert_eq!(
            check_stage_set(&[CotStage::KeyElementExtraction, CotStage::KeyElementExtraction]),
            Err(CotError::StageOrder)
        );
        assert!(check_stage_set(&[CotStage::KeyElementExtraction, CotStage::TechnicalCinematicPlanning]).is_ok());
    }

    #[test]
    fn parse_single_block() {
        let raw = block(json!({"units": [{"title": "a"}]}));
        let payload = parse_stage_output(CotStage::DefineBoundaries, &raw).unwrap();
        assert_eq!(payload["units"][0]["title"], "a");
    }

    #[test]
    fn parse_without_block_fails() {
        assert_eq!(
            parse_stage_output(CotStage::DefineBoundaries, "just prose"),
            Err(ParseError::NoStructuredBlock)
        );
        // an unterminated block does not count
        let raw = format!("{BLOCK_OPEN}\n{{\"units\": []}}\n");
        assert_eq!(
            parse_stage_output(CotStage::DefineBoundaries, &raw),
            Err(ParseError::NoStructuredBlock)
        );
    }

    #[test]
    fn last_block_wins() {
        let raw = format!(
            "{}\nOn reflection:\n{}",
            block(json!({"units": [1]})),
            block(json!({"units": [2]}))
        );
        let payload = parse_stage_output(CotStage::DefineBoundaries, &raw).unwrap();
        assert_eq!(payload["units"], json!([2]));
    }

    #[test]
    fn plain_json_fences_are_ignored() {
        let raw = "```json\n{\"units\": []}\n```\n";
        assert_eq!(
            parse_stage_output(CotStage::DefineBoundaries, raw),
            Err(ParseError::NoStructuredBlock)
        );
    }

    #[test]
    fn schema_mismatch_names_the_key() {
        let raw = block(json!({"plot_points": []}));
        let err = parse_stage_output(CotStage::NarrativeStructureAnalysis, &raw).unwrap_err();
        assert_eq!(
            err,
            ParseError::SchemaMismatch("missing key `emotional_beats`".into())
        );
        let raw = block(json!({"units": {}}));
        assert!(matches!(
            parse_stage_output(CotStage::TechnicalCinematicPlanning, &raw),
            Err(ParseError::SchemaMismatch(_))
        ));
        let raw = block(json!([1, 2]));
        assert!(matches!(
            parse_stage_output(CotStage::DefineBoundaries, &raw),
            Err(ParseError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn template_keys_are_top_level_and_deduplicated() {
        let keys = template_keys("{{sub_script.summary}} and {{characters}} {{ sub_script.title }}");
        assert_eq!(keys, vec!["sub_script".to_string(), "characters".to_string()]);
    }

    fn scene_context() -> Payload {
        let mut ctx = Payload::new();
        ctx.insert(
            "sub_script".into(),
            json!({"id": "ss_001", "title": "The Call", "summary": "Elsa hears a voice from the north."}),
        );
        ctx.insert("characters".into(), json!(["Elsa", "Anna"]));
        ctx.insert("max_units".into(), json!(6));
        ctx.insert("abstract".into(), json!("Elsa hears a voice from the north."));
        ctx
    }

    #[test]
    fn rendered_prompt_contains_heading_and_context_text() {
        let set = TemplateSet::builtin();
        let prompt = set
            .render_stage_prompt(CotStage::DefineBoundaries, "scene_plan", &scene_context())
            .unwrap();
        assert!(prompt.contains("Define Boundaries & Structural Units"));
        assert!(prompt.contains("Elsa hears a voice from the north."));
        assert!(prompt.contains(BLOCK_OPEN));
        let again = set
            .render_stage_prompt(CotStage::DefineBoundaries, "scene_plan", &scene_context())
            .unwrap();
        assert_eq!(prompt.as_bytes(), again.as_bytes());
    }

    #[test]
    fn missing_context_key_is_reported() {
        let set = TemplateSet::builtin();
        let mut ctx = scene_context();
        ctx.remove("characters");
        assert_eq!(
            set.render_stage_prompt(CotStage::DefineBoundaries, "scene_plan", &ctx),
            Err(CotError::MissingContextKey("characters".into()))
        );
    }

    #[test]
    fn every_builtin_agent_stage_has_a_template() {
        let set = TemplateSet::builtin();
        for (agent, stages) in [
            ("director", &[1u8, 2, 3][..]),
            ("scene_plan", &[1, 2, 3, 4][..]),
            ("shot_plan", &[2, 4, 5][..]),
        ] {
            assert!(set.system(agent).is_some());
            for n in stages {
                assert!(set.stage(agent, CotStage::from_ordinal(*n).unwrap()).is_some());
            }
        }
    }

    #[test]
    fn route_round_trips_through_system_message() {
        let route = Route {
            agent_kind: "shot_plan".into(),
            unit: "sc_004".into(),
            stage: CotStage::TechnicalCinematicPlanning,
            attempt: 2,
        };
        let msgs = [ChatMessage::system(format!("{}\nYou plan shots.", route.header()))];
        assert_eq!(Route::from_messages(&msgs), Some(route));
    }

    #[test]
    fn digest_depends_on_content_only() {
        let a = [ChatMessage::system("s"), ChatMessage::user("u")];
        let b = [ChatMessage::system("s"), ChatMessage::user("u")];
        let c = [ChatMessage::system("s"), ChatMessage::user("v")];
        assert_eq!(request_digest(&a), request_digest(&b));
        assert_ne!(request_digest(&a), request_digest(&c));
    }

    /// Replies from a queue and records how often it was asked.
    struct Scripted {
        replies: RefCell<Vec<Result<String, ProviderError>>>,
        calls: RefCell<Vec<Vec<ChatMessage>>>,
    }

    impl Scripted {
        fn new(replies: Vec<Result<String, ProviderError>>) -> Self {
            Self { replies: RefCell::new(replies), calls: RefCell::new(Vec::new()) }
        }
    }

    impl LlmProvider for Scripted {
        fn complete(&self, messages: &[ChatMessage], _: f64) -> Result<String, ProviderError> {
            self.calls.borrow_mut().push(messages.to_vec());
            self.replies.borrow_mut().remove(0)
        }
    }

    fn director_context() -> Payload {
        let mut ctx = Payload::new();
        ctx.insert("synopsis_title".into(), json!("Frozen II"));
        ctx.insert("synopsis".into(), json!("Elsa follows a voice."));
        ctx.insert("characters".into(), json!(["Elsa"]));
        ctx.insert("max_units".into(), json!(8));
        ctx
    }

    fn nsa_payload() -> Value {
        json!({"plot_points": ["call"], "emotional_beats": ["unease"], "character_interactions": []})
    }

    fn request<'a>(stages: &'a [CotStage], ctx: Payload) -> CotRequest<'a> {
        CotRequest {
            agent_kind: "director",
            unit: "synopsis",
            abstract_text: "Elsa follows a voice.",
            stages,
            context: ctx,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            sampling: 0.0,
        }
    }

    #[test]
    fn single_stage_payload_equals_fixture_block() {
        let provider = Scripted::new(vec![Ok(block(nsa_payload()))]);
        let mut traces = Vec::new();
        let out = run_internal_cot(
            request(&[CotStage::NarrativeStructureAnalysis], director_context()),
            &TemplateSet::builtin(),
            &provider,
            &FrozenClock,
            &accept_any,
            &mut traces,
        )
        .unwrap();
        assert_eq!(Value::Object(out), nsa_payload());
        assert_eq!(traces.len(), 1);
        assert_eq!(traces[0].attempt, 1);
        assert!(traces[0].succeeded());
    }

    #[test]
    fn empty_stage_set_is_rejected_before_any_call() {
        let provider = Scripted::new(vec![]);
        let mut traces = Vec::new();
        let err = run_internal_cot(
            request(&[], director_context()),
            &TemplateSet::builtin(),
            &provider,
            &FrozenClock,
            &accept_any,
            &mut traces,
        )
        .unwrap_err();
        assert_eq!(err, CotError::EmptyStageSet);
        assert!(provider.calls.borrow().is_empty());
    }

    #[test]
    fn malformed_twice_then_valid_takes_three_attempts() {
        let provider = Scripted::new(vec![
            Ok("no block here".into()),
            Ok(block(json!({"plot_points": []}))),
            Ok(block(nsa_payload())),
        ]);
        let mut traces = Vec::new();
        run_internal_cot(
            request(&[CotStage::NarrativeStructureAnalysis], director_context()),
            &TemplateSet::builtin(),
            &provider,
            &FrozenClock,
            &accept_any,
            &mut traces,
        )
        .unwrap();
        assert_eq!(provider.calls.borrow().len(), 3);
        assert_eq!(traces.iter().map(|t| t.attempt).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(!traces[0].succeeded() && !traces[1].succeeded() && traces[2].succeeded());
        // the final attempt carries both failed answers and both repair notes
        let last = &provider.calls.borrow()[2];
        assert_eq!(last.len(), 6);
        assert!(last[3].content.contains("no ```plan-json block"));
        assert!(last[5].content.contains("missing key `emotional_beats`"));
    }

    #[test]
    fn exhausted_retries_surface_the_last_parse_error() {
        let provider = Scripted::new(vec![Ok("a".into()), Ok("b".into()), Ok("c".into())]);
        let mut traces = Vec::new();
        let err = run_internal_cot(
            request(&[CotStage::NarrativeStructureAnalysis], director_context()),
            &TemplateSet::builtin(),
            &provider,
            &FrozenClock,
            &accept_any,
            &mut traces,
        )
        .unwrap_err();
        assert_eq!(
            err,
            CotError::StageParseExhausted {
                stage: CotStage::NarrativeStructureAnalysis,
                attempts: 3,
                last_error: ParseError::NoStructuredBlock,
            }
        );
        assert_eq!(traces.len(), 3);
    }

    #[test]
    fn transport_failure_is_not_retried() {
        let provider = Scripted::new(vec![Err(ProviderError::Transport("refused".into()))]);
        let mut traces = Vec::new();
        let err = run_internal_cot(
            request(&[CotStage::NarrativeStructureAnalysis], director_context()),
            &TemplateSet::builtin(),
            &provider,
            &FrozenClock,
            &accept_any,
            &mut traces,
        )
        .unwrap_err();
        assert!(matches!(err, CotError::ProviderFailure { .. }));
        assert_eq!(traces.len(), 1);
        assert!(traces[0].error.is_some());
    }

    #[test]
    fn stage_outputs_flow_into_later_prompts() {
        let provider = Scripted::new(vec![
            Ok(block(nsa_payload())),
            Ok(block(json!({"key_characters": ["Elsa"], "key_events": ["the voice"], "emotional_significance": "calling"}))),
        ]);
        let mut traces = Vec::new();
        let out = run_internal_cot(
            request(
                &[CotStage::NarrativeStructureAnalysis, CotStage::KeyElementExtraction],
                director_context(),
            ),
            &TemplateSet::builtin(),
            &provider,
            &FrozenClock,
            &accept_any,
            &mut traces,
        )
        .unwrap();
        assert!(out.contains_key("plot_points") && out.contains_key("key_events"));
        assert!(!out.contains_key("synopsis"));
        let second_prompt = &provider.calls.borrow()[1][1].content;
        assert!(second_prompt.contains("\"emotional_beats\""));
        assert_eq!(traces[0].stage, CotStage::NarrativeStructureAnalysis);
        assert_eq!(traces[1].stage, CotStage::KeyElementExtraction);
    }

    #[test]
    fn payload_check_rejections_are_retried() {
        let provider = Scripted::new(vec![Ok(block(nsa_payload())), Ok(block(nsa_payload()))]);
        let mut traces = Vec::new();
        let calls = RefCell::new(0);
        let check = |_: CotStage, _: &Payload| {
            *calls.borrow_mut() += 1;
            if *calls.borrow() == 1 { Err("first answer rejected".to_string()) } else { Ok(()) }
        };
        run_internal_cot(
            request(&[CotStage::NarrativeStructureAnalysis], director_context()),
            &TemplateSet::builtin(),
            &provider,
            &FrozenClock,
            &check,
            &mut traces,
        )
        .unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].error.as_deref(), Some("schema mismatch: first answer rejected"));
    }
}
