//! Structural validation of character banks and plans.
//!
//! Validation never fails; it returns a [`ValidationReport`]. Errors block
//! rendering, warnings do not.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{
    scene_id, shot_id, sub_script_id, CharacterBank, MoviePlan, SynopsisMode, PLAN_FORMAT_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IssueCode {
    EmptyBank,
    EmptyCharacterName,
    DuplicateName,
    PortraitUnresolved,
    VoiceUnresolved,
    MissingVoiceSample,
    EmptySynopsis,
    UnsupportedFormatVersion,
    DuplicateId,
    MalformedId,
    DanglingReference,
    DuplicateIndex,
    IndexGap,
    EmptyRationale,
    EmptyField,
    SceneWithoutShots,
    SubScriptWithoutScenes,
    UnknownCharacter,
    UnknownSubtitleSpeaker,
    EmptySubtitleLine,
    InvalidDuration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub code: IssueCode,
    /// Where the issue was found: an entity id, or `bank/<name>`.
    pub locus: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn push(&mut self, severity: Severity, code: IssueCode, locus: &str, message: String) {
        self.issues.push(Issue {
            severity,
            code,
            locus: locus.to_string(),
            message,
        });
    }

    fn error(&mut self, code: IssueCode, locus: &str, message: String) {
        self.push(Severity::Error, code, locus, message);
    }

    fn warn(&mut self, code: IssueCode, locus: &str, message: String) {
        self.push(Severity::Warning, code, locus, message);
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has(&self, code: IssueCode) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }

    pub fn has_error(&self, code: IssueCode) -> bool {
        self.errors().any(|i| i.code == code)
    }
}

/// Answers whether an artifact locator points at something readable.
pub trait ArtifactResolver {
    fn resolves(&self, locator: &str) -> bool;
}

/// Resolver that accepts every locator; for purely structural checks.
pub struct AcceptAll;

impl ArtifactResolver for AcceptAll {
    fn resolves(&self, _locator: &str) -> bool {
        true
    }
}

fn check_bank_structure(bank: &CharacterBank, report: &mut ValidationReport) {
    if bank.is_empty() {
        report.error(
            IssueCode::EmptyBank,
            "bank",
            "character bank has no entries".into(),
        );
    }
    let mut seen = BTreeSet::new();
    let mut reported = BTreeSet::new();
    for entry in &bank.entries {
        if entry.name.trim().is_empty() {
            report.error(
                IssueCode::EmptyCharacterName,
                "bank",
                "character entry with empty name".into(),
            );
            continue;
        }
        if !seen.insert(entry.name.as_str()) && reported.insert(entry.name.as_str()) {
            report.error(
                IssueCode::DuplicateName,
                &format!("bank/{}", entry.name),
                format!("character name `{}` appears more than once", entry.name),
            );
        }
    }
}

/// Validates a character bank, resolving every portrait and voice locator.
///
/// In joint mode, when a plan is supplied, every subtitled character must
/// carry a voice sample; without a plan, missing voices are only warnings.
pub fn validate_character_bank(
    bank: &CharacterBank,
    mode: SynopsisMode,
    plan: Option<&MoviePlan>,
    resolver: &dyn ArtifactResolver,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_bank_structure(bank, &mut report);

    for entry in &bank.entries {
        let locus = format!("bank/{}", entry.name);
        if !resolver.resolves(&entry.portrait_ref) {
            report.error(
                IssueCode::PortraitUnresolved,
                &locus,
                format!("portrait `{}` cannot be read", entry.portrait_ref),
            );
        }
        if let Some(voice) = &entry.voice_ref {
            if !resolver.resolves(voice) {
                report.error(
                    IssueCode::VoiceUnresolved,
                    &locus,
                    format!("voice sample `{voice}` cannot be read"),
                );
            }
        }
    }

    if mode.is_joint() {
        match plan {
            Some(plan) => {
                let speakers: BTreeSet<&str> =
                    plan.shots.iter().flat_map(|s| s.speakers()).collect();
                for entry in &bank.entries {
                    if entry.voice_ref.is_none() && speakers.contains(entry.name.as_str()) {
                        report.error(
                            IssueCode::MissingVoiceSample,
                            &format!("bank/{}", entry.name),
                            format!("`{}` speaks but has no voice sample", entry.name),
                        );
                    }
                }
            }
            None => {
                for entry in bank.entries.iter().filter(|e| e.voice_ref.is_none()) {
                    report.warn(
                        IssueCode::MissingVoiceSample,
                        &format!("bank/{}", entry.name),
                        format!(
                            "`{}` has no voice sample and cannot speak in joint mode",
                            entry.name
                        ),
                    );
                }
            }
        }
    }
    report
}

fn check_indices(
    report: &mut ValidationReport,
    scope: &str,
    indexed: &[(u32, &str)],
) {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for (index, _) in indexed {
        *counts.entry(*index).or_default() += 1;
    }
    for (index, id) in indexed {
        if counts[index] > 1 {
            report.error(
                IssueCode::DuplicateIndex,
                id,
                format!("{scope} index {index} is used more than once"),
            );
            counts.insert(*index, 0);
        }
    }
    let n = indexed.len() as u32;
    let present: BTreeSet<u32> = indexed.iter().map(|(i, _)| *i).collect();
    for expected in 1..=n {
        if !present.contains(&expected) {
            report.error(
                IssueCode::IndexGap,
                scope,
                format!("{scope} indices are not contiguous: {expected} is missing"),
            );
            break;
        }
    }
}

fn nonblank(s: &str) -> bool {
    !s.trim().is_empty()
}

/// Structural validation of a complete plan.
///
/// Pure: it never touches artifacts, so identical plans give identical
/// reports. Portrait resolution belongs to [`validate_character_bank`].
pub fn validate_plan(plan: &MoviePlan) -> ValidationReport {
    let mut report = ValidationReport::default();
    let joint = plan.synopsis.mode.is_joint();

    if plan.format_version != PLAN_FORMAT_VERSION {
        report.error(
            IssueCode::UnsupportedFormatVersion,
            "plan",
            format!("unsupported format_version `{}`", plan.format_version),
        );
    }
    if !nonblank(&plan.synopsis.body) {
        report.error(
            IssueCode::EmptySynopsis,
            "synopsis",
            "synopsis body is empty".into(),
        );
    }
    check_bank_structure(&plan.bank, &mut report);

    let mut ids = BTreeSet::new();
    let mut dup = |report: &mut ValidationReport, id: &str| {
        if !ids.insert(id.to_string()) {
            report.error(IssueCode::DuplicateId, id, format!("id `{id}` is not unique"));
        }
    };

    let unknown_character = |report: &mut ValidationReport, locus: &str, name: &str| {
        if !plan.bank.contains(name) {
            report.warn(
                IssueCode::UnknownCharacter,
                locus,
                format!("character `{name}` is not in the bank"),
            );
        }
    };

    // Sub-scripts.
    let mut indexed = Vec::new();
    for ss in &plan.sub_scripts {
        dup(&mut report, &ss.id);
        if ss.id != sub_script_id(ss.index) {
            report.error(
                IssueCode::MalformedId,
                &ss.id,
                format!("sub-script id should be `{}`", sub_script_id(ss.index)),
            );
        }
        if !nonblank(&ss.rationale) {
            report.error(
                IssueCode::EmptyRationale,
                &ss.id,
                "sub-script has no segmentation rationale".into(),
            );
        }
        for name in &ss.characters {
            unknown_character(&mut report, &ss.id, name);
        }
        if plan.scenes_of(&ss.id).next().is_none() {
            report.warn(
                IssueCode::SubScriptWithoutScenes,
                &ss.id,
                "sub-script produced no scenes".into(),
            );
        }
        indexed.push((ss.index, ss.id.as_str()));
    }
    check_indices(&mut report, "sub-script", &indexed);

    // Scenes.
    let mut indexed = Vec::new();
    for scene in &plan.scenes {
        dup(&mut report, &scene.id);
        if scene.id != scene_id(scene.index) {
            report.error(
                IssueCode::MalformedId,
                &scene.id,
                format!("scene id should be `{}`", scene_id(scene.index)),
            );
        }
        if plan.sub_script(&scene.sub_script_id).is_none() {
            report.error(
                IssueCode::DanglingReference,
                &scene.id,
                format!("sub-script `{}` does not exist", scene.sub_script_id),
            );
        }
        for (field, value) in [
            ("plot", &scene.plot),
            ("emotional_tone", &scene.emotional_tone),
        ] {
            if !nonblank(value) {
                report.error(
                    IssueCode::EmptyField,
                    &scene.id,
                    format!("scene field `{field}` is empty"),
                );
            }
        }
        if !nonblank(&scene.boundary_rationale) {
            report.error(
                IssueCode::EmptyRationale,
                &scene.id,
                "scene has no boundary rationale".into(),
            );
        }
        for name in &scene.characters {
            unknown_character(&mut report, &scene.id, name);
        }
        if plan.shots_of(&scene.id).next().is_none() {
            report.error(
                IssueCode::SceneWithoutShots,
                &scene.id,
                "scene has no shots".into(),
            );
        }
        indexed.push((scene.index, scene.id.as_str()));
    }
    check_indices(&mut report, "scene", &indexed);

    // Shots, grouped per scene for index contiguity.
    let mut per_scene: BTreeMap<&str, Vec<(u32, &str)>> = BTreeMap::new();
    for shot in &plan.shots {
        dup(&mut report, &shot.id);
        match plan.scene(&shot.scene_id) {
            None => report.error(
                IssueCode::DanglingReference,
                &shot.id,
                format!("scene `{}` does not exist", shot.scene_id),
            ),
            Some(scene) => {
                let expected = shot_id(scene.index, shot.index);
                if shot.id != expected {
                    report.error(
                        IssueCode::MalformedId,
                        &shot.id,
                        format!("shot id should be `{expected}`"),
                    );
                }
            }
        }
        if !nonblank(&shot.rationale) {
            report.error(
                IssueCode::EmptyRationale,
                &shot.id,
                "shot has no rationale".into(),
            );
        }
        if !(shot.duration_hint.is_finite() && shot.duration_hint > 0.0) {
            report.error(
                IssueCode::InvalidDuration,
                &shot.id,
                format!("duration_hint {} is not positive", shot.duration_hint),
            );
        }
        let speakers: BTreeSet<&str> = shot.speakers().collect();
        for name in &shot.characters {
            if plan.bank.contains(name) {
                continue;
            }
            if joint && speakers.contains(name.as_str()) {
                report.error(
                    IssueCode::UnknownCharacter,
                    &shot.id,
                    format!("speaking character `{name}` is not in the bank"),
                );
            } else {
                unknown_character(&mut report, &shot.id, name);
            }
        }
        for sub in &shot.subtitles {
            if !shot.characters.iter().any(|c| c == &sub.character) {
                report.error(
                    IssueCode::UnknownSubtitleSpeaker,
                    &shot.id,
                    format!("subtitle speaker `{}` is not in the shot", sub.character),
                );
            }
            if !nonblank(&sub.line) {
                report.error(
                    IssueCode::EmptySubtitleLine,
                    &shot.id,
                    format!("empty subtitle line for `{}`", sub.character),
                );
            }
            if joint {
                if let Some(entry) = plan.bank.get(&sub.character) {
                    if entry.voice_ref.is_none() {
                        report.error(
                            IssueCode::MissingVoiceSample,
                            &shot.id,
                            format!("`{}` speaks but has no voice sample", sub.character),
                        );
                    }
                }
            }
        }
        per_scene
            .entry(shot.scene_id.as_str())
            .or_default()
            .push((shot.index, shot.id.as_str()));
    }
    for (scene, indexed) in per_scene {
        check_indices(&mut report, &format!("{scene} shot"), &indexed);
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;
    use alloc::vec;

    fn tiny_plan() -> MoviePlan {
        MoviePlan {
            format_version: "1".into(),
            synopsis: ScriptSynopsis {
                title: "t".into(),
                body: "b".into(),
                mode: SynopsisMode::PureVideo,
            },
            bank: CharacterBank::new(vec![CharacterEntry {
                name: "Elsa".into(),
                portrait_ref: "elsa.ppm".into(),
                voice_ref: None,
            }]),
            sub_scripts: vec![SubScript {
                id: "ss_001".into(),
                index: 1,
                title: "t".into(),
                summary: "s".into(),
                characters: vec!["Elsa".into()],
                rationale: "r".into(),
            }],
            scenes: vec![Scene {
                id: "sc_001".into(),
                sub_script_id: "ss_001".into(),
                index: 1,
                title: "t".into(),
                plot: "p".into(),
                characters: vec!["Elsa".into()],
                emotional_tone: "calm".into(),
                visual_style: "v".into(),
                cinematography_notes: "c".into(),
                boundary_rationale: "r".into(),
            }],
            shots: vec![Shot {
                id: "sc_001/sh_001".into(),
                scene_id: "sc_001".into(),
                index: 1,
                plot: "p".into(),
                characters: vec!["Elsa".into()],
                shot_type: ShotType::Wide,
                camera_movement: CameraMovement::Static,
                lighting: "l".into(),
                subtitles: vec![SubtitleLine {
                    character: "Elsa".into(),
                    line: "Hello".into(),
                }],
                continuity_notes: String::new(),
                rationale: "r".into(),
                duration_hint: 5.0,
            }],
            traces: vec![],
            created_at: "2025-01-01T00:00:00Z".into(),
            engine_config_digest: "d".into(),
        }
    }

    struct Only(&'static [&'static str]);
    impl ArtifactResolver for Only {
        fn resolves(&self, locator: &str) -> bool {
            self.0.contains(&locator)
        }
    }

    #[test]
    fn tiny_plan_is_clean() {
        assert!(validate_plan(&tiny_plan()).is_clean());
    }

    #[test]
    fn duplicate_name_reported_once() {
        let entry = CharacterEntry {
            name: "Elsa".into(),
            portrait_ref: "elsa.ppm".into(),
            voice_ref: None,
        };
        let bank = CharacterBank::new(vec![entry.clone(), entry]);
        let report = validate_character_bank(&bank, SynopsisMode::PureVideo, None, &AcceptAll);
        let dups: Vec<_> = report
            .errors()
            .filter(|i| i.code == IssueCode::DuplicateName)
            .collect();
        assert_eq!(dups.len(), 1);
        assert_eq!(dups[0].locus, "bank/Elsa");
    }

    #[test]
    fn minimal_bank_is_clean_in_pure_mode() {
        let plan = tiny_plan();
        let report =
            validate_character_bank(&plan.bank, SynopsisMode::PureVideo, None, &Only(&["elsa.ppm"]));
        assert!(report.is_clean(), "{report:?}");
    }

    #[test]
    fn unresolvable_portrait_is_an_error() {
        let plan = tiny_plan();
        let report = validate_character_bank(&plan.bank, SynopsisMode::PureVideo, None, &Only(&[]));
        assert!(report.has_error(IssueCode::PortraitUnresolved));
    }

    #[test]
    fn joint_mode_speaker_without_voice_is_an_error() {
        let mut plan = tiny_plan();
        plan.synopsis.mode = SynopsisMode::JointAudioVideo;
        let report = validate_character_bank(
            &plan.bank,
            SynopsisMode::JointAudioVideo,
            Some(&plan),
            &AcceptAll,
        );
        assert!(report.has_error(IssueCode::MissingVoiceSample));
        assert!(validate_plan(&plan).has_error(IssueCode::MissingVoiceSample));
    }

    #[test]
    fn joint_mode_without_plan_only_warns_about_voices() {
        let plan = tiny_plan();
        let report =
            validate_character_bank(&plan.bank, SynopsisMode::JointAudioVideo, None, &AcceptAll);
        assert!(!report.has_errors());
        assert!(report.has(IssueCode::MissingVoiceSample));
    }

    #[test]
    fn dangling_sub_script_reference() {
        let mut plan = tiny_plan();
        plan.scenes[0].sub_script_id = "ss_009".into();
        assert!(validate_plan(&plan).has_error(IssueCode::DanglingReference));
    }

    #[test]
    fn unknown_character_severity_depends_on_mode() {
        let mut plan = tiny_plan();
        plan.shots[0].characters.push("Olaf".into());
        plan.shots[0].subtitles.push(SubtitleLine {
            character: "Olaf".into(),
            line: "Wait for me!".into(),
        });
        let pure = validate_plan(&plan);
        assert!(pure.has(IssueCode::UnknownCharacter));
        assert!(!pure.has_error(IssueCode::UnknownCharacter));

        plan.synopsis.mode = SynopsisMode::JointAudioVideo;
        plan.bank.entries[0].voice_ref = Some("elsa.wav".into());
        assert!(validate_plan(&plan).has_error(IssueCode::UnknownCharacter));
    }

    #[test]
    fn silent_unknown_extra_is_only_a_warning_in_joint_mode() {
        let mut plan = tiny_plan();
        plan.synopsis.mode = SynopsisMode::JointAudioVideo;
        plan.bank.entries[0].voice_ref = Some("elsa.wav".into());
        plan.shots[0].characters.push("Villager".into());
        let report = validate_plan(&plan);
        assert!(report.has(IssueCode::UnknownCharacter));
        assert!(!report.has_errors(), "{report:?}");
    }

    #[test]
    fn index_gap_and_duplicate_are_distinct() {
        let mut plan = tiny_plan();
        plan.shots[0].index = 2;
        plan.shots[0].id = "sc_001/sh_002".into();
        assert!(validate_plan(&plan).has_error(IssueCode::IndexGap));

        let mut plan = tiny_plan();
        let mut extra = plan.shots[0].clone();
        extra.id = "sc_001/sh_002".into();
        plan.shots.push(extra);
        let report = validate_plan(&plan);
        assert!(report.has_error(IssueCode::DuplicateIndex));
        assert!(report.has_error(IssueCode::MalformedId));
    }
}
