//! Plan entities: the character bank, the synopsis and the
//! sub-script → scene → shot hierarchy.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub const PLAN_FORMAT_VERSION: &str = "1";
pub const DEFAULT_SHOT_SECONDS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterEntry {
    pub name: String,
    /// Locator of the character's portrait image(s).
    pub portrait_ref: String,
    /// Locator of a voice sample; mandatory for characters that speak in
    /// joint audio-video mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voice_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CharacterBank {
    pub entries: Vec<CharacterEntry>,
}

impl CharacterBank {
    pub fn new(entries: Vec<CharacterEntry>) -> Self {
        Self { entries }
    }

    pub fn get(&self, name: &str) -> Option<&CharacterEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynopsisMode {
    #[default]
    PureVideo,
    JointAudioVideo,
}

impl SynopsisMode {
    pub fn is_joint(self) -> bool {
        matches!(self, SynopsisMode::JointAudioVideo)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SynopsisMode::PureVideo => "pure-video",
            SynopsisMode::JointAudioVideo => "joint-audio-video",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptSynopsis {
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub mode: SynopsisMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubScript {
    pub id: String,
    pub index: u32,
    pub title: String,
    pub summary: String,
    pub characters: Vec<String>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub sub_script_id: String,
    pub index: u32,
    pub title: String,
    pub plot: String,
    pub characters: Vec<String>,
    pub emotional_tone: String,
    pub visual_style: String,
    pub cinematography_notes: String,
    pub boundary_rationale: String,
}

/// Lowercases, maps `-`/`_` to spaces and collapses runs of whitespace.
fn normalize_label(raw: &str) -> String {
    let mapped: String = raw
        .chars()
        .map(|c| if c == '-' || c == '_' { ' ' } else { c })
        .collect::<String>()
        .to_lowercase();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ShotType {
    Wide,
    Medium,
    CloseUp,
    /// Unrecognized label, kept verbatim.
    Other(String),
}

impl ShotType {
    pub fn parse(raw: &str) -> Self {
        match normalize_label(raw).as_str() {
            "wide" => ShotType::Wide,
            "medium" => ShotType::Medium,
            "close up" | "closeup" => ShotType::CloseUp,
            _ => ShotType::Other(raw.to_owned()),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            ShotType::Wide => "wide",
            ShotType::Medium => "medium",
            ShotType::CloseUp => "close-up",
            ShotType::Other(raw) => raw,
        }
    }

    pub fn is_other(&self) -> bool {
        matches!(self, ShotType::Other(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CameraMovement {
    Static,
    Pan,
    Tilt,
    Zoom,
    Tracking,
    /// Unrecognized label, kept verbatim.
    Other(String),
}

impl CameraMovement {
    pub fn parse(raw: &str) -> Self {
        match normalize_label(raw).as_str() {
            "static" => CameraMovement::Static,
            "pan" => CameraMovement::Pan,
            "tilt" => CameraMovement::Tilt,
            "zoom" => CameraMovement::Zoom,
            "tracking" => CameraMovement::Tracking,
            _ => CameraMovement::Other(raw.to_owned()),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            CameraMovement::Static => "static",
            CameraMovement::Pan => "pan",
            CameraMovement::Tilt => "tilt",
            CameraMovement::Zoom => "zoom",
            CameraMovement::Tracking => "tracking",
            CameraMovement::Other(raw) => raw,
        }
    }

    pub fn is_other(&self) -> bool {
        matches!(self, CameraMovement::Other(_))
    }
}

macro_rules! label_serde {
    ($ty:ty) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.label())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                Ok(<$ty>::parse(&raw))
            }
        }
    };
}

label_serde!(ShotType);
label_serde!(CameraMovement);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtitleLine {
    pub character: String,
    pub line: String,
}

fn default_duration() -> f64 {
    DEFAULT_SHOT_SECONDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub id: String,
    pub scene_id: String,
    pub index: u32,
    pub plot: String,
    pub characters: Vec<String>,
    pub shot_type: ShotType,
    pub camera_movement: CameraMovement,
    pub lighting: String,
    #[serde(default)]
    pub subtitles: Vec<SubtitleLine>,
    #[serde(default)]
    pub continuity_notes: String,
    pub rationale: String,
    /// Target clip length in seconds.
    #[serde(default = "default_duration")]
    pub duration_hint: f64,
}

impl Shot {
    pub fn speakers(&self) -> impl Iterator<Item = &str> {
        self.subtitles.iter().map(|s| s.character.as_str())
    }
}

fn default_format_version() -> String {
    PLAN_FORMAT_VERSION.to_string()
}

/// The full planning hierarchy for one job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoviePlan {
    #[serde(default = "default_format_version")]
    pub format_version: String,
    pub synopsis: ScriptSynopsis,
    pub bank: CharacterBank,
    pub sub_scripts: Vec<SubScript>,
    pub scenes: Vec<Scene>,
    pub shots: Vec<Shot>,
    /// Job-relative paths of the trace files, in cascade order.
    #[serde(default)]
    pub traces: Vec<String>,
    pub created_at: String,
    pub engine_config_digest: String,
}

impl MoviePlan {
    pub fn shot(&self, id: &str) -> Option<&Shot> {
        self.shots.iter().find(|s| s.id == id)
    }

    pub fn scene(&self, id: &str) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.id == id)
    }

    pub fn sub_script(&self, id: &str) -> Option<&SubScript> {
        self.sub_scripts.iter().find(|s| s.id == id)
    }

    pub fn scenes_of<'a>(&'a self, sub_script_id: &'a str) -> impl Iterator<Item = &'a Scene> {
        self.scenes
            .iter()
            .filter(move |s| s.sub_script_id == sub_script_id)
    }

    pub fn shots_of<'a>(&'a self, scene_id: &'a str) -> impl Iterator<Item = &'a Shot> {
        self.shots.iter().filter(move |s| s.scene_id == scene_id)
    }

    /// Pretty JSON with a trailing newline, the on-disk `plan.json` form.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("plan serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn sub_script_id(p: u32) -> String {
    format!("ss_{p:03}")
}

pub fn scene_id(i: u32) -> String {
    format!("sc_{i:03}")
}

pub fn shot_id(i: u32, j: u32) -> String {
    format!("sc_{i:03}/sh_{j:03}")
}
