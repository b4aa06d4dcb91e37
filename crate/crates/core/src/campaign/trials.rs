use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Method;
use crate::error::{Error, Result};
use crate::sensitivity::RectRegion;
use crate::transforms::TransformKind;

/// Outcome of checking label invariance on one follow-up image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Label preserved.
    Positive,
    /// Label changed: a detected failure.
    Negative,
}

/// One executed follow-up test.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed_id: String,
    pub method: Method,
    pub transform: TransformKind,
    pub rect: RectRegion,
    pub center_gradient: f32,
    pub pred_before: usize,
    pub pred_after: usize,
    pub verdict: Verdict,
}

impl TrialRecord {
    pub fn is_negative(&self) -> bool {
        self.verdict == Verdict::Negative
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    seed_id: String,
    method: Method,
    transform: TransformKind,
    top: usize,
    left: usize,
    width: usize,
    height: usize,
    center_gradient: f32,
    pred_before: usize,
    pred_after: usize,
    verdict: Verdict,
}

impl From<&TrialRecord> for Row {
    fn from(r: &TrialRecord) -> Self {
        Row {
            seed_id: r.seed_id.clone(),
            method: r.method,
            transform: r.transform,
            top: r.rect.top,
            left: r.rect.left,
            width: r.rect.width,
            height: r.rect.height,
            center_gradient: r.center_gradient,
            pred_before: r.pred_before,
            pred_after: r.pred_after,
            verdict: r.verdict,
        }
    }
}

impl TryFrom<Row> for TrialRecord {
    type Error = String;

    fn try_from(r: Row) -> std::result::Result<Self, String> {
        let changed = r.pred_after != r.pred_before;
        if changed != (r.verdict == Verdict::Negative) {
            return Err(format!(
                "verdict {:?} contradicts predictions {} -> {}",
                r.verdict, r.pred_before, r.pred_after
            ));
        }
        if !(0.0..=1.0).contains(&r.center_gradient) {
            return Err(format!("center_gradient {} outside [0,1]", r.center_gradient));
        }
        Ok(TrialRecord {
            seed_id: r.seed_id,
            method: r.method,
            transform: r.transform,
            rect: RectRegion {
                top: r.top,
                left: r.left,
                height: r.height,
                width: r.width,
            },
            center_gradient: r.center_gradient,
            pred_before: r.pred_before,
            pred_after: r.pred_after,
            verdict: r.verdict,
        })
    }
}

pub const TRIALS_HEADER: [&str; 11] = [
    "seed_id",
    "method",
    "transform",
    "top",
    "left",
    "width",
    "height",
    "center_gradient",
    "pred_before",
    "pred_after",
    "verdict",
];

pub fn write_trials<W: Write>(writer: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(TRIALS_HEADER)
        .map_err(|e| Error::io("<trials>", std::io::Error::other(e)))?;
    for r in records {
        w.serialize(Row::from(r)).map_err(|e| Error::io("<trials>", std::io::Error::other(e)))?;
    }
    w.flush().map_err(|e| Error::io("<trials>", e))
}

pub fn read_trials<R: Read>(reader: R, origin: &Path) -> Result<Vec<TrialRecord>> {
    csv::Reader::from_reader(reader)
        .deserialize::<Row>()
        .enumerate()
        .map(|(i, row)| {
            let bad = |reason: String| Error::DecodeError {
                path: origin.to_path_buf(),
                reason: format!("row {}: {reason}", i + 1),
            };
            row.map_err(|e| bad(e.to_string()))
                .and_then(|r| TrialRecord::try_from(r).map_err(bad))
        })
        .collect()
}

pub fn read_trials_file(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trials(std::io::BufReader::new(file), path)
}
