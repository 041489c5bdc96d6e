//! Score records and aggregation.
//!
//! Records persist as JSON lines, append-only, so interrupted evaluation runs
//! resume by skipping already-scored (prompt, completion) pairs. Range
//! invariants are enforced when a record is parsed from the judge and
//! re-checked whenever a file is loaded.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::EvalError;

/// One grading: four category scores in 1..=10 plus identification and the
/// judge's verbatim commentary (stored, never parsed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub prompt_id: u32,
    pub completion_id: u32,
    pub model_tag: String,
    pub grammar: u8,
    pub creativity: u8,
    pub consistency: u8,
    pub plot: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_text: Option<String>,
}

impl ScoreRecord {
    pub fn validate(&self) -> Result<(), EvalError> {
        for (category, value) in [
            ("grammar", self.grammar),
            ("creativity", self.creativity),
            ("consistency", self.consistency),
            ("plot", self.plot),
        ] {
            if !(1..=10).contains(&value) {
                return Err(EvalError::ScoreOutOfRange {
                    category: match category {
                        "grammar" => "grammar",
                        "creativity" => "creativity",
                        "consistency" => "consistency",
                        _ => "plot",
                    },
                    value: value as i64,
                });
            }
        }
        Ok(())
    }

    pub fn key(&self) -> (u32, u32) {
        (self.prompt_id, self.completion_id)
    }
}

/// Appends one record as a JSON line.
pub fn append_record(path: &Path, record: &ScoreRecord) -> Result<(), EvalError> {
    record.validate()?;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let line = serde_json::to_string(record)?;
    writeln!(file, "{line}")?;
    Ok(())
}

/// Loads and re-validates every record; an empty or missing file yields an
/// empty list so fresh runs and resumes share one path.
pub fn load_records(path: &Path) -> Result<Vec<ScoreRecord>, EvalError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ScoreRecord =
            serde_json::from_str(line).map_err(|e| EvalError::BadRecord {
                index,
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        record.validate().map_err(|e| EvalError::BadRecord {
            index,
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Per-category means plus the overall average (mean of the four category
/// means). The validation loss of the graded model is attached by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_tag: String,
    pub n_records: usize,
    pub grammar: f64,
    pub creativity: f64,
    pub consistency: f64,
    pub plot: f64,
    pub overall: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
}

pub fn aggregate_scores(records: &[ScoreRecord]) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let n = records.len() as f64;
    let mean = |f: fn(&ScoreRecord) -> u8| records.iter().map(|r| f(r) as f64).sum::<f64>() / n;
    let grammar = mean(|r| r.grammar);
    let creativity = mean(|r| r.creativity);
    let consistency = mean(|r| r.consistency);
    let plot = mean(|r| r.plot);
    Ok(EvalReport {
        model_tag: records[0].model_tag.clone(),
        n_records: records.len(),
        grammar,
        creativity,
        consistency,
        plot,
        overall: (grammar + creativity + consistency + plot) / 4.0,
        val_loss: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(g: u8, c: u8, s: u8, p: u8) -> ScoreRecord {
        ScoreRecord {
            prompt_id: 0,
            completion_id: 0,
            model_tag: "test".into(),
            grammar: g,
            creativity: c,
            consistency: s,
            plot: p,
            judge_text: None,
        }
    }

    #[test]
    fn hand_mean_example() {
        let report =
            aggregate_scores(&[record(8, 7, 6, 9), record(6, 7, 8, 7)]).unwrap();
        assert_eq!(report.grammar, 7.0);
        assert_eq!(report.creativity, 7.0);
        assert_eq!(report.consistency, 7.0);
        assert_eq!(report.plot, 8.0);
        assert_eq!(report.overall, 7.25);
        assert_eq!(report.n_records, 2);
    }

    #[test]
    fn single_record_aggregates_to_itself() {
        let report = aggregate_scores(&[record(3, 5, 7, 9)]).unwrap();
        assert_eq!(
            (report.grammar, report.creativity, report.consistency, report.plot),
            (3.0, 5.0, 7.0, 9.0)
        );
    }

    #[test]
    fn identical_records_mean_is_idempotent() {
        let records = vec![record(4, 4, 4, 4); 5];
        let report = aggregate_scores(&records).unwrap();
        assert_eq!(report.overall, 4.0);
    }

    #[test]
    fn empty_set_errors() {
        assert!(matches!(
            aggregate_scores(&[]),
            Err(EvalError::EmptyRecords)
        ));
    }

    #[test]
    fn range_validation() {
        let mut bad = record(11, 5, 5, 5);
        assert!(matches!(
            bad.validate(),
            Err(EvalError::ScoreOutOfRange { category: "grammar", value: 11 })
        ));
        bad.grammar = 0;
        assert!(bad.validate().is_err());
        bad.grammar = 10;
        assert!(bad.validate().is_ok());
    }

    #[test]
    fn jsonl_roundtrip_and_resume_keying() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        let mut a = record(8, 7, 6, 9);
        a.prompt_id = 1;
        a.judge_text = Some("Fine work.".into());
        let mut b = record(5, 5, 5, 5);
        b.prompt_id = 2;
        append_record(&path, &a).unwrap();
        append_record(&path, &b).unwrap();
        let loaded = load_records(&path).unwrap();
        assert_eq!(loaded, vec![a, b]);
        let keys: Vec<(u32, u32)> = loaded.iter().map(ScoreRecord::key).collect();
        assert_eq!(keys, vec![(1, 0), (2, 0)]);
    }

    #[test]
    fn out_of_range_on_disk_is_rejected_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        std::fs::write(
            &path,
            "{\"prompt_id\":0,\"completion_id\":0,\"model_tag\":\"x\",\"grammar\":11,\"creativity\":5,\"consistency\":5,\"plot\":5}\n",
        )
        .unwrap();
        assert!(matches!(
            load_records(&path),
            Err(EvalError::BadRecord { .. })
        ));
    }

    #[test]
    fn missing_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_records(&dir.path().join("none.jsonl")).unwrap().is_empty());
    }
}
