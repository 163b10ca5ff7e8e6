//! Planning core for automated long-form movie generation.
//!
//! A script synopsis and a character bank are decomposed into sub-scripts,
//! scenes and shots by three planning agents. Each agent runs a staged
//! chain-of-thought over an [`LlmProvider`](cot::LlmProvider) and records a
//! trace for every stage attempt. The resulting [`MoviePlan`](model::MoviePlan)
//! is validated structurally, ordered, rendered by external backends (driven
//! from the companion `cineplan` crate) and rated with a five-metric rubric.
//!
//! The crate is `no_std` and only needs an allocator. Everything that touches
//! the filesystem, the network or a clock is injected through traits.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod agents;
pub mod assemble;
pub mod cascade;
pub mod checks;
pub mod cot;
pub mod digest;
pub mod eval;
pub mod media;
pub mod mock_media;
pub mod model;
pub mod ordering;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;
pub mod validate;

pub use model::{
    CameraMovement, CharacterBank, CharacterEntry, MoviePlan, Scene, ScriptSynopsis, Shot,
    ShotType, SubScript, SubtitleLine, SynopsisMode,
};
pub use validate::{Issue, IssueCode, Severity, ValidationReport};
