//! Five-metric human rating: sheet templates, rubric ladders and
//! aggregation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assemble::AssemblyManifest;
use crate::digest::sha256_hex;
use crate::model::MoviePlan;
use crate::ordering::order_unchecked;

pub const RUBRIC_VERSION: &str = "1";
pub const MAX_SCORE: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    VisualAppeal,
    ScriptFaithfulness,
    NarrativeCoherence,
    CharacterConsistency,
    PhysicalLaw,
}

impl MetricKind {
    /// Sheet column order.
    pub const ALL: [MetricKind; 5] = [
        MetricKind::VisualAppeal,
        MetricKind::ScriptFaithfulness,
        MetricKind::NarrativeCoherence,
        MetricKind::CharacterConsistency,
        MetricKind::PhysicalLaw,
    ];

    /// Column order of the ablation report tables.
    pub const REPORT_ORDER: [MetricKind; 5] = [
        MetricKind::VisualAppeal,
        MetricKind::ScriptFaithfulness,
        MetricKind::CharacterConsistency,
        MetricKind::PhysicalLaw,
        MetricKind::NarrativeCoherence,
    ];

    pub fn column(self) -> &'static str {
        match self {
            MetricKind::VisualAppeal => "visual_appeal",
            MetricKind::ScriptFaithfulness => "script_faithfulness",
            MetricKind::NarrativeCoherence => "narrative_coherence",
            MetricKind::CharacterConsistency => "character_consistency",
            MetricKind::PhysicalLaw => "physical_law",
        }
    }

    pub fn short_label(self) -> &'static str {
        match self {
            MetricKind::VisualAppeal => "Vis. Appeal",
            MetricKind::ScriptFaithfulness => "Script Faith.",
            MetricKind::NarrativeCoherence => "Narr. Coher.",
            MetricKind::CharacterConsistency => "Char. Consist.",
            MetricKind::PhysicalLaw => "Phys. Law",
        }
    }

    pub fn position(self) -> usize {
        Self::ALL.iter().position(|m| *m == self).expect("listed")
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub score: u8,
    pub label: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricRubric {
    pub metric: MetricKind,
    pub summary: String,
    pub anchors: Vec<Anchor>,
}

const GRADES: [&str; 5] = ["Unusable", "Poor", "Fair", "Good", "Excellent"];

fn ladder(metric: MetricKind, summary: &str, steps: [&str; 5]) -> MetricRubric {
    let mut anchors = Vec::with_capacity(6);
    anchors.push(Anchor {
        score: 0,
        label: "Unratable".into(),
        description: "Shot missing or impossible to judge on this metric.".into(),
    });
    for (n, (label, description)) in GRADES.iter().zip(steps).enumerate() {
        anchors.push(Anchor {
            score: n as u8 + 1,
            label: (*label).into(),
            description: description.into(),
        });
    }
    MetricRubric {
        metric,
        summary: summary.into(),
        anchors,
    }
}

/// Rating guidance handed to raters alongside every sheet.
pub fn rubric() -> Vec<MetricRubric> {
    use MetricKind::*;
    alloc::vec![
        ladder(
            VisualAppeal,
            "How good the frames look on their own.",
            [
                "Broken output; content not recognizable.",
                "Recognizable, but defects are everywhere.",
                "Clear content with defects you notice on first viewing.",
                "Clean, with defects only on close inspection.",
                "No visible defects.",
            ],
        ),
        ladder(
            ScriptFaithfulness,
            "Does the shot show what its plan entry asks for?",
            [
                "Nothing from the plan entry is on screen.",
                "A few planned elements appear; most are wrong or absent.",
                "The gist matches; several details do not.",
                "Matches apart from small details.",
                "Every planned element is there.",
            ],
        ),
        ladder(
            NarrativeCoherence,
            "Can a viewer follow the story across consecutive shots?",
            [
                "No story can be followed.",
                "The story is mostly lost between shots.",
                "Followable with effort; some jumps confuse.",
                "Easy to follow; rare rough cuts.",
                "Reads as one continuous story.",
            ],
        ),
        ladder(
            CharacterConsistency,
            "Do characters stay recognizably themselves?",
            [
                "Characters cannot be told apart or identified.",
                "Identity changes between most shots.",
                "Identity holds, with visible drift.",
                "Stable, with slight drift.",
                "Fully stable.",
            ],
        ),
        ladder(
            PhysicalLaw,
            "Is motion and contact physically plausible?",
            [
                "Nothing behaves physically.",
                "Implausible motion in most shots.",
                "Mostly plausible with obvious errors.",
                "Plausible with minor glitches.",
                "Entirely plausible.",
            ],
        ),
    ]
}

/// One rater's scores for one shot. Blank cells are `None`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RatingRow {
    pub shot_id: String,
    pub visual_appeal: Option<u8>,
    pub script_faithfulness: Option<u8>,
    pub narrative_coherence: Option<u8>,
    pub character_consistency: Option<u8>,
    pub physical_law: Option<u8>,
    #[serde(default)]
    pub rater_id: String,
    #[serde(default)]
    pub notes: String,
}

impl RatingRow {
    pub fn blank(shot_id: impl Into<String>) -> Self {
        Self { shot_id: shot_id.into(), ..Self::default() }
    }

    pub fn score(&self, metric: MetricKind) -> Option<u8> {
        match metric {
            MetricKind::VisualAppeal => self.visual_appeal,
            MetricKind::ScriptFaithfulness => self.script_faithfulness,
            MetricKind::NarrativeCoherence => self.narrative_coherence,
            MetricKind::CharacterConsistency => self.character_consistency,
            MetricKind::PhysicalLaw => self.physical_law,
        }
    }

    pub fn set(&mut self, metric: MetricKind, score: Option<u8>) {
        let slot = match metric {
            MetricKind::VisualAppeal => &mut self.visual_appeal,
            MetricKind::ScriptFaithfulness => &mut self.script_faithfulness,
            MetricKind::NarrativeCoherence => &mut self.narrative_coherence,
            MetricKind::CharacterConsistency => &mut self.character_consistency,
            MetricKind::PhysicalLaw => &mut self.physical_law,
        };
        *slot = score;
    }

    pub fn is_rated(&self) -> bool {
        MetricKind::ALL.iter().any(|m| self.score(*m).is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSheet {
    pub plan_ref: String,
    pub rubric_version: String,
    pub rows: Vec<RatingRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("row {row}, column `{column}`: {detail}")]
pub struct ScoreError {
    /// 1-based data row.
    pub row: usize,
    pub column: String,
    pub detail: String,
}

impl RatingSheet {
    /// Every present score must be an integer in `0..=5`.
    pub fn check_scores(&self) -> Result<(), ScoreError> {
        for (n, row) in self.rows.iter().enumerate() {
            for metric in MetricKind::ALL {
                if let Some(score) = row.score(metric) {
                    if score > MAX_SCORE {
                        return Err(ScoreError {
                            row: n + 1,
                            column: metric.column().to_string(),
                            detail: format!("score {score} is outside 0..={MAX_SCORE}"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Identifies the plan a sheet belongs to.
pub fn plan_ref(plan: &MoviePlan) -> String {
    sha256_hex(plan.to_json().as_bytes())
}

/// Blank sheet with one row per shot in playback order. Shots the manifest
/// lists as missing are pre-annotated so raters can score them 0.
pub fn generate_rating_sheet(plan: &MoviePlan, manifest: Option<&AssemblyManifest>) -> RatingSheet {
    let rows = order_unchecked(plan)
        .into_iter()
        .map(|id| {
            let mut row = RatingRow::blank(id.clone());
            if manifest.is_some_and(|m| m.missing.contains(&id)) {
                row.notes = "not rendered".into();
            }
            row
        })
        .collect();
    RatingSheet {
        plan_ref: plan_ref(plan),
        rubric_version: RUBRIC_VERSION.into(),
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMean {
    pub metric: MetricKind,
    /// Unrounded mean; `None` when no cell for this metric was scored.
    pub mean: Option<f64>,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    /// In sheet column order.
    pub metrics: Vec<MetricMean>,
    /// Mean of the five metric means; `None` if any metric is unscored.
    pub overall: Option<f64>,
    pub rated_shots: usize,
    pub unrated_shots: usize,
    pub raters: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("no scored cells in any sheet")]
    NoRatedRows,
}

/// Half-up rounding to `digits` decimals. Only meaningful for the
/// non-negative values scores take.
pub fn round_half_up(value: f64, digits: u32) -> f64 {
    let scale = (0..digits).fold(1.0f64, |acc, _| acc * 10.0);
    // tolerance absorbs binary representation error such as 3.825 -> 3.82499..
    let scaled = value * scale + 0.5 + 1e-9;
    (scaled as i64) as f64 / scale
}

/// Two-decimal display form, e.g. `3.82`.
pub fn display2(value: f64) -> String {
    format!("{:.2}", round_half_up(value, 2))
}

impl AggregateReport {
    /// Report built from already-aggregated metric means (sheet column order).
    pub fn from_metric_means(means: [f64; 5]) -> Self {
        let metrics = MetricKind::ALL
            .iter()
            .zip(means)
            .map(|(m, v)| MetricMean { metric: *m, mean: Some(v), cells: 0 })
            .collect();
        Self {
            overall: Some(means.iter().sum::<f64>() / 5.0),
            metrics,
            rated_shots: 0,
            unrated_shots: 0,
            raters: 0,
        }
    }

    pub fn mean(&self, metric: MetricKind) -> Option<f64> {
        self.metrics.iter().find(|m| m.metric == metric).and_then(|m| m.mean)
    }

    pub fn overall_display(&self) -> Option<String> {
        self.overall.map(display2)
    }
}

/// Uniform mean over every scored `(shot, rater)` cell per metric; the
/// overall score is the mean of the five metric means.
pub fn aggregate_ratings(sheets: &[RatingSheet]) -> Result<AggregateReport, AggregateError> {
    let mut sums = [0u64; 5];
    let mut cells = [0usize; 5];
    let mut shots = BTreeSet::new();
    let mut rated = BTreeSet::new();
    let mut raters = BTreeSet::new();

    for row in sheets.iter().flat_map(|s| s.rows.iter()) {
        shots.insert(row.shot_id.as_str());
        if row.is_rated() {
            rated.insert(row.shot_id.as_str());
            raters.insert(row.rater_id.as_str());
        }
        for metric in MetricKind::ALL {
            if let Some(score) = row.score(metric) {
                sums[metric.position()] += u64::from(score);
                cells[metric.position()] += 1;
            }
        }
    }
    if cells.iter().all(|c| *c == 0) {
        return Err(AggregateError::NoRatedRows);
    }

    let metrics: Vec<MetricMean> = MetricKind::ALL
        .iter()
        .map(|m| {
            let k = m.position();
            MetricMean {
                metric: *m,
                mean: (cells[k] > 0).then(|| sums[k] as f64 / cells[k] as f64),
                cells: cells[k],
            }
        })
        .collect();
    let overall = metrics
        .iter()
        .map(|m| m.mean)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.iter().sum::<f64>() / 5.0);

    Ok(AggregateReport {
        metrics,
        overall,
        rated_shots: rated.len(),
        unrated_shots: shots.len() - rated.len(),
        raters: raters.len(),
    })
}
