//! Random valid plans and targeted corruptions, for property tests here and
//! in downstream crates. Enabled by the `testkit` feature.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use proptest::prelude::*;

use crate::model::{
    scene_id, shot_id, sub_script_id, CameraMovement, CharacterBank, CharacterEntry, MoviePlan,
    Scene, ScriptSynopsis, Shot, ShotType, SubScript, SubtitleLine, SynopsisMode,
    PLAN_FORMAT_VERSION,
};
use crate::validate::IssueCode;

const NAMES: [&str; 8] = [
    "Elsa", "Anna", "Olaf", "Kristoff", "Sven", "Mattias", "Honeymaren", "Yelena",
];

fn text() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z ,.'é]{0,24}"
}

fn shot_type() -> impl Strategy<Value = ShotType> {
    prop_oneof![
        Just(ShotType::Wide),
        Just(ShotType::Medium),
        Just(ShotType::CloseUp),
        prop::sample::select(&["dolly-zoom", "over the shoulder", "Aerial"][..])
            .prop_map(|s| ShotType::Other(s.to_string())),
    ]
}

fn camera_movement() -> impl Strategy<Value = CameraMovement> {
    prop_oneof![
        Just(CameraMovement::Static),
        Just(CameraMovement::Pan),
        Just(CameraMovement::Tilt),
        Just(CameraMovement::Zoom),
        Just(CameraMovement::Tracking),
        prop::sample::select(&["crane", "Handheld"][..])
            .prop_map(|s| CameraMovement::Other(s.to_string())),
    ]
}

#[derive(Debug, Clone)]
struct ShotDraft {
    plot: String,
    cast: Vec<prop::sample::Index>,
    lines: Vec<(prop::sample::Index, String)>,
    shot_type: ShotType,
    camera_movement: CameraMovement,
    lighting: String,
    rationale: String,
    quarter_seconds: u32,
}

fn shot_draft() -> impl Strategy<Value = ShotDraft> {
    (
        text(),
        prop::collection::vec(any::<prop::sample::Index>(), 1..4),
        prop::collection::vec((any::<prop::sample::Index>(), text()), 0..3),
        shot_type(),
        camera_movement(),
        text(),
        text(),
        1u32..80,
    )
        .prop_map(
            |(plot, cast, lines, shot_type, camera_movement, lighting, rationale, q)| ShotDraft {
                plot,
                cast,
                lines,
                shot_type,
                camera_movement,
                lighting,
                rationale,
                quarter_seconds: q,
            },
        )
}

/// Shape: sub-scripts → scenes per sub-script → shots per scene.
fn shape() -> impl Strategy<Value = Vec<Vec<Vec<ShotDraft>>>> {
    prop::collection::vec(
        prop::collection::vec(prop::collection::vec(shot_draft(), 1..4), 1..4),
        1..4,
    )
}

/// Plans that satisfy every structural invariant, in either mode.
pub fn arb_valid_plan() -> impl Strategy<Value = MoviePlan> {
    (
        1usize..=NAMES.len(),
        any::<bool>(),
        text(),
        text(),
        shape(),
        any::<u32>(),
    )
        .prop_map(|(bank_size, joint, title, body, shape, stamp)| {
            build_plan(bank_size, joint, title, body, shape, stamp)
        })
}

fn build_plan(
    bank_size: usize,
    joint: bool,
    title: String,
    body: String,
    shape: Vec<Vec<Vec<ShotDraft>>>,
    stamp: u32,
) -> MoviePlan {
    let bank = CharacterBank::new(
        NAMES[..bank_size]
            .iter()
            .map(|n| CharacterEntry {
                name: (*n).into(),
                portrait_ref: format!("portraits/{}.png", n.to_lowercase()),
                voice_ref: joint.then(|| format!("voices/{}.wav", n.to_lowercase())),
            })
            .collect(),
    );
    let mode = if joint { SynopsisMode::JointAudioVideo } else { SynopsisMode::PureVideo };

    let mut plan = MoviePlan {
        format_version: PLAN_FORMAT_VERSION.into(),
        synopsis: ScriptSynopsis { title, body, mode },
        bank,
        sub_scripts: Vec::new(),
        scenes: Vec::new(),
        shots: Vec::new(),
        traces: Vec::new(),
        created_at: format!("2025-01-01T00:00:{:02}Z", stamp % 60),
        engine_config_digest: format!("{stamp:08x}"),
    };

    let mut scene_index = 0u32;
    for (p, scenes) in shape.into_iter().enumerate() {
        let p = p as u32 + 1;
        let ss_id = sub_script_id(p);
        plan.sub_scripts.push(SubScript {
            id: ss_id.clone(),
            index: p,
            title: format!("Part {p}"),
            summary: format!("Summary of part {p}"),
            characters: alloc::vec![NAMES[0].into()],
            rationale: format!("Part {p} closes on a turning point"),
        });
        for shots in scenes {
            scene_index += 1;
            let sc_id = scene_id(scene_index);
            plan.scenes.push(Scene {
                id: sc_id.clone(),
                sub_script_id: ss_id.clone(),
                index: scene_index,
                title: format!("Scene {scene_index}"),
                plot: format!("Events of scene {scene_index}"),
                characters: alloc::vec![NAMES[0].into()],
                emotional_tone: "tense".into(),
                visual_style: "cold palette".into(),
                cinematography_notes: "long lenses".into(),
                boundary_rationale: "location changes".into(),
            });
            for (j, draft) in shots.into_iter().enumerate() {
                let j = j as u32 + 1;
                let mut characters: Vec<String> = Vec::new();
                for ix in &draft.cast {
                    let name = NAMES[ix.index(bank_size)].to_string();
                    if !characters.contains(&name) {
                        characters.push(name);
                    }
                }
                let subtitles = draft
                    .lines
                    .into_iter()
                    .map(|(ix, line)| SubtitleLine {
                        character: ix.get(&characters).clone(),
                        line,
                    })
                    .collect();
                plan.shots.push(Shot {
                    id: shot_id(scene_index, j),
                    scene_id: sc_id.clone(),
                    index: j,
                    plot: draft.plot,
                    characters,
                    shot_type: draft.shot_type,
                    camera_movement: draft.camera_movement,
                    lighting: draft.lighting,
                    subtitles,
                    continuity_notes: String::new(),
                    rationale: draft.rationale,
                    duration_hint: draft.quarter_seconds as f64 * 0.25,
                });
            }
        }
    }
    plan
}

/// A corruption of a valid plan and the error code it must raise.
pub struct Mutation {
    pub name: &'static str,
    pub expect: IssueCode,
    pub apply: fn(&mut MoviePlan),
}

fn first_speaker(plan: &mut MoviePlan) -> String {
    let shot = &mut plan.shots[0];
    let name = shot.characters[0].clone();
    if shot.subtitles.is_empty() {
        shot.subtitles.push(SubtitleLine { character: name.clone(), line: "Wait!".into() });
    }
    shot.subtitles[0].character.clone()
}

pub const MUTATIONS: [Mutation; 12] = [
    Mutation {
        name: "scene points at a missing sub-script",
        expect: IssueCode::DanglingReference,
        apply: |p| p.scenes[0].sub_script_id = "ss_099".into(),
    },
    Mutation {
        name: "shot points at a missing scene",
        expect: IssueCode::DanglingReference,
        apply: |p| p.shots[0].scene_id = "sc_999".into(),
    },
    Mutation {
        name: "two sub-scripts share an index",
        expect: IssueCode::DuplicateIndex,
        apply: |p| {
            let mut copy = p.sub_scripts[0].clone();
            copy.id = "ss_extra".into();
            p.sub_scripts.push(copy);
        },
    },
    Mutation {
        name: "scene indices skip a value",
        expect: IssueCode::IndexGap,
        apply: |p| {
            let last = p.scenes.len() - 1;
            p.scenes[last].index += 1;
        },
    },
    Mutation {
        name: "shot rationale is blank",
        expect: IssueCode::EmptyRationale,
        apply: |p| p.shots[0].rationale = "  ".into(),
    },
    Mutation {
        name: "sub-script rationale is empty",
        expect: IssueCode::EmptyRationale,
        apply: |p| p.sub_scripts[0].rationale.clear(),
    },
    Mutation {
        name: "subtitle speaker is not in the shot",
        expect: IssueCode::UnknownSubtitleSpeaker,
        apply: |p| {
            p.shots[0].subtitles.push(SubtitleLine {
                character: "Nobody".into(),
                line: "Who goes there?".into(),
            })
        },
    },
    Mutation {
        name: "scene loses its emotional tone",
        expect: IssueCode::EmptyField,
        apply: |p| p.scenes[0].emotional_tone.clear(),
    },
    Mutation {
        name: "scene has no shots",
        expect: IssueCode::SceneWithoutShots,
        apply: |p| {
            let id = p.scenes[0].id.clone();
            p.shots.retain(|s| s.scene_id != id);
        },
    },
    Mutation {
        name: "duplicate character name",
        expect: IssueCode::DuplicateName,
        apply: |p| {
            let copy = p.bank.entries[0].clone();
            p.bank.entries.push(copy);
        },
    },
    Mutation {
        name: "shot duration is not positive",
        expect: IssueCode::InvalidDuration,
        apply: |p| p.shots[0].duration_hint = 0.0,
    },
    Mutation {
        name: "joint-mode speaker without voice sample",
        expect: IssueCode::MissingVoiceSample,
        apply: |p| {
            p.synopsis.mode = SynopsisMode::JointAudioVideo;
            let speaker = first_speaker(p);
            for e in &mut p.bank.entries {
                if e.name == speaker {
                    e.voice_ref = None;
                }
            }
        },
    },
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordering::plan_ordering;
    use crate::validate::validate_plan;
    use alloc::collections::BTreeSet;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn generated_plans_are_valid(plan in arb_valid_plan()) {
            let report = validate_plan(&plan);
            prop_assert!(!report.has_errors(), "{:?}", report);
        }

        #[test]
        fn every_mutation_is_caught(plan in arb_valid_plan()) {
            for m in &MUTATIONS {
                let mut bad = plan.clone();
                (m.apply)(&mut bad);
                prop_assert!(validate_plan(&bad).has_error(m.expect), "{}", m.name);
            }
        }

        #[test]
        fn json_round_trip_is_lossless(plan in arb_valid_plan()) {
            let text = plan.to_json();
            let back = MoviePlan::from_json(&text).unwrap();
            prop_assert_eq!(&back, &plan);
            prop_assert_eq!(back.to_json(), text);
        }

        #[test]
        fn ordering_is_a_stable_sorted_permutation(plan in arb_valid_plan()) {
            let order = plan_ordering(&plan).unwrap();
            prop_assert_eq!(&order, &plan_ordering(&plan).unwrap());
            let all: BTreeSet<&str> = plan.shots.iter().map(|s| s.id.as_str()).collect();
            let got: BTreeSet<&str> = order.iter().map(String::as_str).collect();
            prop_assert_eq!(order.len(), plan.shots.len());
            prop_assert_eq!(got, all);
            let keys: Vec<(u32, u32)> = order
                .iter()
                .map(|id| {
                    let shot = plan.shot(id).unwrap();
                    (plan.scene(&shot.scene_id).unwrap().index, shot.index)
                })
                .collect();
            prop_assert!(keys.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn validation_is_pure(plan in arb_valid_plan(), m in 0..MUTATIONS.len()) {
            let mut plan = plan;
            (MUTATIONS[m].apply)(&mut plan);
            let bytes = plan.to_json();
            let a = validate_plan(&MoviePlan::from_json(&bytes).unwrap());
            let b = validate_plan(&MoviePlan::from_json(&bytes).unwrap());
            prop_assert_eq!(a, b);
        }

        #[test]
        fn counts_sum_over_parents(plan in arb_valid_plan()) {
            let scenes: usize = plan.sub_scripts.iter().map(|s| plan.scenes_of(&s.id).count()).sum();
            let shots: usize = plan.scenes.iter().map(|s| plan.shots_of(&s.id).count()).sum();
            prop_assert_eq!(scenes, plan.scenes.len());
            prop_assert_eq!(shots, plan.shots.len());
        }
    }
}
