//! Deterministic placeholder media: PPM frames and JSON manifests.
//!
//! Output bytes depend only on the role, the shot, the seed and the
//! conditioning inputs, never on time or call order.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::media::{ArtifactRole, MediaRole};
use crate::model::Shot;

pub const MOCK_FPS: u32 = 4;
pub const FRAME_WIDTH: usize = 48;
pub const FRAME_HEIGHT: usize = 27;

/// A file to be written relative to the shot directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockFile {
    pub path: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockArtifact {
    pub role: ArtifactRole,
    /// Path relative to the shot directory; a directory for clips.
    pub locator: String,
    pub duration: f64,
    pub files: Vec<MockFile>,
}

/// Number of frames for a clip of `seconds` at [`MOCK_FPS`]; at least one.
pub fn frame_count(seconds: f64) -> usize {
    let n = (seconds * MOCK_FPS as f64 + 0.5) as usize;
    n.max(1)
}

fn rng_for(role: MediaRole, shot_id: &str, seed: u64, frame: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(role.as_str().as_bytes());
    h.update(b"\0");
    h.update(shot_id.as_bytes());
    h.update(b"\0");
    h.update(seed.to_le_bytes());
    h.update((frame as u64).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// One binary PPM frame: a seeded background, a square that drifts with
/// the frame index, and low-amplitude noise.
pub fn ppm_frame(role: MediaRole, shot_id: &str, seed: u64, frame: usize) -> Vec<u8> {
    // base colour and square colour are fixed per shot, noise varies per frame
    let mut base_rng = rng_for(role, shot_id, seed, usize::MAX);
    let mut palette = [0u8; 6];
    base_rng.fill_bytes(&mut palette);
    let mut noise_rng = rng_for(role, shot_id, seed, frame);

    let header = format!("P6\n{FRAME_WIDTH} {FRAME_HEIGHT}\n255\n");
    let mut out = Vec::with_capacity(header.len() + FRAME_WIDTH * FRAME_HEIGHT * 3);
    out.extend_from_slice(header.as_bytes());

    let side = FRAME_HEIGHT / 3;
    let x0 = (frame * 3) % (FRAME_WIDTH - side);
    let y0 = (FRAME_HEIGHT - side) / 2;
    let mut noise = [0u8; FRAME_WIDTH * 3];
    for y in 0..FRAME_HEIGHT {
        noise_rng.fill_bytes(&mut noise);
        for x in 0..FRAME_WIDTH {
            let inside = (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y);
            let colour = if inside { &palette[3..] } else { &palette[..3] };
            for c in 0..3 {
                out.push(colour[c] ^ (noise[x * 3 + c] & 0x0f));
            }
        }
    }
    out
}

#[derive(Serialize)]
struct ClipManifest<'a> {
    shot_id: &'a str,
    role: &'a str,
    fps: u32,
    width: usize,
    height: usize,
    duration: f64,
    frames: Vec<String>,
    inputs: Vec<InputRef<'a>>,
}

#[derive(Serialize)]
struct InputRef<'a> {
    role: &'a str,
    path: &'a str,
}

#[derive(Serialize)]
struct AudioManifest<'a> {
    shot_id: &'a str,
    duration: f64,
    lines: Vec<TimedLine<'a>>,
}

#[derive(Serialize)]
struct TimedLine<'a> {
    character: &'a str,
    line: &'a str,
    start_ms: u64,
    end_ms: u64,
}

const LINE_GAP_MS: u64 = 250;

fn line_length_ms(line: &str) -> u64 {
    600 + 60 * line.chars().count() as u64
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("manifest serializes");
    bytes.push(b'\n');
    bytes
}

/// Timed speech manifest; empty subtitles give a silent track of the shot's
/// duration.
pub fn audio_manifest(shot: &Shot) -> (Vec<u8>, f64) {
    let mut cursor = LINE_GAP_MS;
    let lines: Vec<TimedLine<'_>> = shot
        .subtitles
        .iter()
        .map(|s| {
            let start_ms = cursor;
            let end_ms = start_ms + line_length_ms(&s.line);
            cursor = end_ms + LINE_GAP_MS;
            TimedLine { character: &s.character, line: &s.line, start_ms, end_ms }
        })
        .collect();
    let duration = if lines.is_empty() {
        shot.duration_hint
    } else {
        cursor as f64 / 1000.0
    };
    let manifest = AudioManifest { shot_id: &shot.id, duration, lines };
    (to_json(&manifest), duration)
}

fn clip(role: MediaRole, shot: &Shot, seed: u64, duration: f64, inputs: &[(ArtifactRole, String)]) -> MockArtifact {
    let dir = role.produces().as_str();
    let n = frame_count(duration);
    let mut files = Vec::with_capacity(n + 1);
    let mut names = Vec::with_capacity(n);
    for k in 0..n {
        let name = format!("frame_{k:04}.ppm");
        files.push(MockFile {
            path: format!("{dir}/{name}"),
            bytes: ppm_frame(role, &shot.id, seed, k),
        });
        names.push(name);
    }
    let manifest = ClipManifest {
        shot_id: &shot.id,
        role: role.as_str(),
        fps: MOCK_FPS,
        width: FRAME_WIDTH,
        height: FRAME_HEIGHT,
        duration,
        frames: names,
        inputs: inputs
            .iter()
            .map(|(r, p)| InputRef { role: r.as_str(), path: p })
            .collect(),
    };
    files.push(MockFile { path: format!("{dir}/clip.json"), bytes: to_json(&manifest) });
    MockArtifact { role: role.produces(), locator: dir.to_string(), duration, files }
}

/// Synthesizes the artifact a backend bound to `role` would produce.
///
/// `inputs` are upstream artifacts (keyframe for video, keyframe and audio
/// for talking); they are recorded in the clip manifest. A talking clip
/// lasts as long as its audio track when one is supplied.
pub fn mock_render(
    role: MediaRole,
    shot: &Shot,
    seed: u64,
    inputs: &[(ArtifactRole, String)],
    audio_duration: Option<f64>,
) -> MockArtifact {
    match role {
        MediaRole::Image => MockArtifact {
            role: ArtifactRole::Keyframe,
            locator: "keyframe.ppm".into(),
            duration: 0.0,
            files: alloc::vec![MockFile {
                path: "keyframe.ppm".into(),
                bytes: ppm_frame(role, &shot.id, seed, 0),
            }],
        },
        MediaRole::Audio => {
            let (bytes, duration) = audio_manifest(shot);
            MockArtifact {
                role: ArtifactRole::Audio,
                locator: "audio.json".into(),
                duration,
                files: alloc::vec![MockFile { path: "audio.json".into(), bytes }],
            }
        }
        MediaRole::Video => clip(role, shot, seed, shot.duration_hint, inputs),
        MediaRole::Talking => {
            let duration = audio_duration.unwrap_or(shot.duration_hint).max(shot.duration_hint);
            clip(role, shot, seed, duration, inputs)
        }
    }
}
