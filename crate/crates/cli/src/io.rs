//! JSONL ingestion and CSV/JSON emission.
//!
//! Record files carry one JSON object per line:
//! `{"id": "...", "scores": [...], "direction": "up"|"down", "adm": [...],
//!   "normalizer": 3.0?, "dedup_keys": ["..."]?}`.
//! Matrix files (for `sweep --forest`) carry
//! `{"correct": [0,1,...], "weights": [...]?}` per line; missing weights
//! default to 1 per tree.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use confgen::calibrate::GenerationRecord;
use confgen::eval::ForestWeights;
use confgen::selection::{Direction, ScoreSequence};
use confgen::Record64;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    scores: Vec<f64>,
    direction: Direction,
    adm: Vec<f64>,
    #[serde(default)]
    normalizer: Option<f64>,
    #[serde(default)]
    dedup_keys: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrixRow {
    correct: Vec<u8>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

/// Applies `parse` to every non-blank line, prefixing failures with the
/// file name and 1-based line number.
fn read_lines<T>(
    path: &Path,
    mut parse: impl FnMut(&str) -> Result<T, String>,
) -> Result<Vec<T>, String> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut items = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        items.push(parse(line).map_err(|e| format!("{}:{}: {e}", path.display(), idx + 1))?);
    }
    Ok(items)
}

/// Reads a JSONL record file, enforcing one direction across the file.
pub fn read_records(path: &Path) -> Result<Vec<Record64>, String> {
    let mut direction: Option<Direction> = None;
    read_lines(path, |line| {
        let raw: RawRecord =
            serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
        match direction {
            None => direction = Some(raw.direction),
            Some(first) if first != raw.direction => {
                return Err(format!(
                    "direction {} conflicts with {} used earlier in the file",
                    raw.direction, first
                ))
            }
            Some(_) => {}
        }
        let scores = ScoreSequence::new(raw.scores, raw.direction).map_err(|e| e.to_string())?;
        let adms = confgen::admissibility::InstanceAdmissibilities::new(raw.adm, raw.normalizer)
            .map_err(|e| e.to_string())?;
        GenerationRecord::new(raw.id, scores, adms, raw.dedup_keys).map_err(|e| e.to_string())
    })
}

/// Reads an ensemble correctness-matrix file into records for the forest
/// demo.
pub fn read_matrix(path: &Path) -> Result<Vec<Record64>, String> {
    let rows = read_lines(path, |line| {
        serde_json::from_str::<RawMatrixRow>(line).map_err(|e| format!("malformed matrix row: {e}"))
    })?;
    let correct: Vec<Vec<u8>> = rows.iter().map(|r| r.correct.clone()).collect();
    let weights = ForestWeights::PerRecord(
        rows.iter()
            .map(|r| {
                r.weights
                    .clone()
                    .unwrap_or_else(|| vec![1.0; r.correct.len()])
            })
            .collect(),
    );
    confgen::eval::forest_records(&correct, &weights)
        .map_err(|e| format!("{}: {e}", path.display()))
}

/// Writes to `--out` when set, stdout otherwise.
pub fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Assembles a CSV document: `# `-prefixed header lines recording the
/// effective config, then the column row, then the data rows.
pub fn csv_document(headers: &[String], columns: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut doc = String::new();
    for h in headers {
        doc.push_str("# ");
        doc.push_str(h);
        doc.push('\n');
    }
    doc.push_str(&columns.join(","));
    doc.push('\n');
    for row in rows {
        doc.push_str(&row.join(","));
        doc.push('\n');
    }
    doc
}
