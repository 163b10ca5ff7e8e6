//! Final output manifest: rendered shots in playback order.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::MoviePlan;
use crate::ordering::order_unchecked;

/// The playable artifact of one rendered shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedShot {
    pub shot_id: String,
    /// Locator of the final artifact (composed clip in joint mode, video otherwise).
    pub artifact: String,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub shot_id: String,
    pub artifact: String,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssemblyManifest {
    pub entries: Vec<ManifestEntry>,
    pub total_duration: f64,
    /// Planned shots without a rendered artifact, in playback order.
    pub missing: Vec<String>,
}

impl AssemblyManifest {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("manifest serializes");
        out.push('\n');
        out
    }
}

/// Orders the rendered shots by `(scene, shot)` index and lists gaps.
pub fn assemble(plan: &MoviePlan, results: &[RenderedShot]) -> AssemblyManifest {
    let mut manifest = AssemblyManifest::default();
    for id in order_unchecked(plan) {
        match results.iter().find(|r| r.shot_id == id) {
            Some(r) => {
                manifest.total_duration += r.duration;
                manifest.entries.push(ManifestEntry {
                    shot_id: id,
                    artifact: r.artifact.clone(),
                    duration: r.duration,
                });
            }
            None => manifest.missing.push(id),
        }
    }
    manifest
}
