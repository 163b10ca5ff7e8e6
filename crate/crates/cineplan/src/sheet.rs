//! Rating sheets on disk: a CSV for raters plus a JSON sidecar carrying the
//! plan reference and the rubric text.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use cineplan_core::eval::{rubric, MetricKind, MetricRubric, RatingRow, RatingSheet, MAX_SCORE, RUBRIC_VERSION};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HEADER: [&str; 8] = [
    "shot_id",
    "visual_appeal",
    "script_faithfulness",
    "narrative_coherence",
    "character_consistency",
    "physical_law",
    "rater_id",
    "notes",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub plan_ref: String,
    pub rubric_version: String,
    pub rubric: Vec<MetricRubric>,
}

#[derive(Debug, Error)]
#[error("{}{}: {detail}", path.display(), locus(*row, column))]
pub struct SheetParseError {
    pub path: PathBuf,
    /// 1-based data row; 0 for the header or the file as a whole.
    pub row: usize,
    pub column: Option<String>,
    pub detail: String,
}

fn locus(row: usize, column: &Option<String>) -> String {
    match (row, column) {
        (0, None) => String::new(),
        (0, Some(c)) => format!(", column `{c}`"),
        (r, None) => format!(", row {r}"),
        (r, Some(c)) => format!(", row {r}, column `{c}`"),
    }
}

/// `ratings.csv` → `ratings.rubric.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("rubric.json")
}

pub fn to_csv(sheet: &RatingSheet) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for row in &sheet.rows {
        let mut rec = vec![row.shot_id.clone()];
        for m in MetricKind::ALL {
            rec.push(row.score(m).map(|s| s.to_string()).unwrap_or_default());
        }
        rec.push(row.rater_id.clone());
        rec.push(row.notes.clone());
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes the CSV and its sidecar.
pub fn write_sheet(path: &Path, sheet: &RatingSheet) -> io::Result<()> {
    fs::write(path, to_csv(sheet))?;
    let sidecar = Sidecar {
        plan_ref: sheet.plan_ref.clone(),
        rubric_version: sheet.rubric_version.clone(),
        rubric: rubric(),
    };
    let mut json = serde_json::to_vec_pretty(&sidecar).expect("serializable");
    json.push(b'\n');
    fs::write(sidecar_path(path), json)
}

fn parse_score(raw: &str) -> Result<Option<u8>, String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    match raw.parse::<u8>() {
        Ok(s) if s <= MAX_SCORE => Ok(Some(s)),
        _ => Err(format!("`{raw}` is not an integer score in 0..={MAX_SCORE}")),
    }
}

/// Parses CSV text. `plan_ref` and the rubric version come from the
/// caller (normally the sidecar).
pub fn parse_csv(path: &Path, text: &str, plan_ref: &str, rubric_version: &str) -> Result<RatingSheet, SheetParseError> {
    let err = |row: usize, column: Option<&str>, detail: String| SheetParseError {
        path: path.to_path_buf(),
        row,
        column: column.map(str::to_owned),
        detail,
    };
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| err(0, None, e.to_string()))?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != HEADER {
        return Err(err(0, None, format!("expected header `{}`, found `{}`", HEADER.join(","), found.join(","))));
    }
    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let row = n + 1;
        let record = record.map_err(|e| err(row, None, e.to_string()))?;
        let shot_id = record[0].trim();
        if shot_id.is_empty() {
            return Err(err(row, Some("shot_id"), "empty shot id".into()));
        }
        let mut r = RatingRow::blank(shot_id);
        for (k, m) in MetricKind::ALL.into_iter().enumerate() {
            let score = parse_score(&record[k + 1]).map_err(|d| err(row, Some(m.column()), d))?;
            r.set(m, score);
        }
        r.rater_id = record[6].trim().to_owned();
        r.notes = record[7].to_owned();
        rows.push(r);
    }
    Ok(RatingSheet { plan_ref: plan_ref.into(), rubric_version: rubric_version.into(), rows })
}

/// Reads a CSV sheet and, when present, its sidecar.
pub fn read_sheet(path: &Path) -> Result<RatingSheet, SheetParseError> {
    let whole = |detail: String| SheetParseError { path: path.to_path_buf(), row: 0, column: None, detail };
    let text = fs::read_to_string(path).map_err(|e| whole(e.to_string()))?;
    let side = sidecar_path(path);
    let (plan_ref, version) = if side.is_file() {
        let raw = fs::read_to_string(&side).map_err(|e| whole(format!("{}: {e}", side.display())))?;
        let s: Sidecar = serde_json::from_str(&raw).map_err(|e| whole(format!("{}: {e}", side.display())))?;
        (s.plan_ref, s.rubric_version)
    } else {
        (String::new(), RUBRIC_VERSION.to_owned())
    };
    parse_csv(path, &text, &plan_ref, &version)
}
