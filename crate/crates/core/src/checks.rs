//! Automated structural proxies for character consistency and narrative
//! coherence. They complement, not replace, human ratings.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{CharacterBank, MoviePlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneShotCount {
    pub scene_id: String,
    pub shots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    /// Fraction of bank characters that appear in at least one shot.
    pub character_coverage: f64,
    /// Fraction of subtitle lines whose speaker is on screen and in the bank.
    pub subtitle_speaker_validity: f64,
    pub shots_per_scene: Vec<SceneShotCount>,
    pub min_shots_per_scene: usize,
    pub max_shots_per_scene: usize,
    pub mean_shots_per_scene: f64,
    /// Fraction of shots whose shot type or camera movement is unrecognized.
    pub other_cinematography_fraction: f64,
    /// Fraction of sub-scripts, scenes and shots carrying a rationale.
    pub rationale_presence: f64,
}

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

pub fn automated_checks(plan: &MoviePlan, bank: &CharacterBank) -> CheckReport {
    let on_screen: BTreeSet<&str> = plan
        .shots
        .iter()
        .flat_map(|s| s.characters.iter().map(String::as_str))
        .collect();
    let covered = bank.names().filter(|n| on_screen.contains(n)).count();

    let mut lines = 0;
    let mut valid_lines = 0;
    for shot in &plan.shots {
        for sub in &shot.subtitles {
            lines += 1;
            if shot.characters.contains(&sub.character) && bank.contains(&sub.character) {
                valid_lines += 1;
            }
        }
    }

    let shots_per_scene: Vec<SceneShotCount> = plan
        .scenes
        .iter()
        .map(|scene| SceneShotCount {
            scene_id: scene.id.clone(),
            shots: plan.shots_of(&scene.id).count(),
        })
        .collect();
    let counts = shots_per_scene.iter().map(|c| c.shots);
    let min = counts.clone().min().unwrap_or(0);
    let max = counts.clone().max().unwrap_or(0);
    let mean = ratio(counts.sum(), shots_per_scene.len(), 0.0);

    let other = plan
        .shots
        .iter()
        .filter(|s| s.shot_type.is_other() || s.camera_movement.is_other())
        .count();

    let units = plan.sub_scripts.len() + plan.scenes.len() + plan.shots.len();
    let with_rationale = plan
        .sub_scripts
        .iter()
        .filter(|s| !s.rationale.trim().is_empty())
        .count()
        + plan
            .scenes
            .iter()
            .filter(|s| !s.boundary_rationale.trim().is_empty())
            .count()
        + plan
            .shots
            .iter()
            .filter(|s| !s.rationale.trim().is_empty())
            .count();

    CheckReport {
        character_coverage: ratio(covered, bank.len(), 0.0),
        subtitle_speaker_validity: ratio(valid_lines, lines, 1.0),
        shots_per_scene,
        min_shots_per_scene: min,
        max_shots_per_scene: max,
        mean_shots_per_scene: mean,
        other_cinematography_fraction: ratio(other, plan.shots.len(), 0.0),
        rationale_presence: ratio(with_rationale, units, 1.0),
    }
}
