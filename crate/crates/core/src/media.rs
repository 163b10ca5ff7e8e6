//! Generation modes and the role vocabulary shared by renderers.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Capability a backend is called for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaRole {
    Image,
    Video,
    Audio,
    Talking,
}

/// Tag on a produced artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactRole {
    Keyframe,
    Video,
    Audio,
    Composed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationMode {
    PureTwoStage,
    PureOneStage,
    JointAudioVideo,
}

impl MediaRole {
    pub const ALL: [MediaRole; 4] = [
        MediaRole::Image,
        MediaRole::Video,
        MediaRole::Audio,
        MediaRole::Talking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MediaRole::Image => "image",
            MediaRole::Video => "video",
            MediaRole::Audio => "audio",
            MediaRole::Talking => "talking",
        }
    }

    /// The artifact tag a call for this role produces.
    pub fn produces(self) -> ArtifactRole {
        match self {
            MediaRole::Image => ArtifactRole::Keyframe,
            MediaRole::Video => ArtifactRole::Video,
            MediaRole::Audio => ArtifactRole::Audio,
            MediaRole::Talking => ArtifactRole::Composed,
        }
    }
}

impl ArtifactRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactRole::Keyframe => "keyframe",
            ArtifactRole::Video => "video",
            ArtifactRole::Audio => "audio",
            ArtifactRole::Composed => "composed",
        }
    }
}

impl GenerationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GenerationMode::PureTwoStage => "pure-two-stage",
            GenerationMode::PureOneStage => "pure-one-stage",
            GenerationMode::JointAudioVideo => "joint-audio-video",
        }
    }

    /// Backend roles the mode needs bound.
    pub fn required_roles(self) -> &'static [MediaRole] {
        match self {
            GenerationMode::PureTwoStage => &[MediaRole::Image, MediaRole::Video],
            GenerationMode::PureOneStage => &[MediaRole::Video],
            GenerationMode::JointAudioVideo => {
                &[MediaRole::Image, MediaRole::Audio, MediaRole::Talking]
            }
        }
    }

    /// Artifact tags a finished render carries, exactly.
    pub fn result_roles(self) -> Vec<ArtifactRole> {
        self.required_roles().iter().map(|r| r.produces()).collect()
    }

    /// The artifact played back in the final cut.
    pub fn final_role(self) -> ArtifactRole {
        match self {
            GenerationMode::JointAudioVideo => ArtifactRole::Composed,
            _ => ArtifactRole::Video,
        }
    }
}

macro_rules! text_enum {
    ($ty:ty, $($v:expr),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = UnknownName;
            fn from_str(s: &str) -> Result<Self, UnknownName> {
                [$($v),+]
                    .into_iter()
                    .find(|v| v.as_str() == s)
                    .ok_or(UnknownName)
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnknownName;

impl fmt::Display for UnknownName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown name")
    }
}

text_enum!(MediaRole, MediaRole::Image, MediaRole::Video, MediaRole::Audio, MediaRole::Talking);
text_enum!(
    ArtifactRole,
    ArtifactRole::Keyframe,
    ArtifactRole::Video,
    ArtifactRole::Audio,
    ArtifactRole::Composed
);
text_enum!(
    GenerationMode,
    GenerationMode::PureTwoStage,
    GenerationMode::PureOneStage,
    GenerationMode::JointAudioVideo
);
