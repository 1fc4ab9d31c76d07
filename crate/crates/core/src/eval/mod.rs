//! Scoring against ground truth and telemetry reports.

pub mod idf1;
pub mod report;

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

pub use idf1::{idf1_score, score_boxes, IdBox, IdScore, DEFAULT_IOU_THRESH};
pub use report::{
    kde_report, percentile, realtime_report, KdeBin, KdeReport, LatencyTrace, RealtimeReport,
    StageSummary,
};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("ground truth has no boxes")]
    EmptyGroundTruth,
    #[error("no ground-truth transitions to compare against")]
    EmptyTransitions,
    #[error("latency trace has no frames")]
    EmptyTrace,
    #[error("fps must be positive, got {0}")]
    Fps(f64),
    #[error("non-finite value in input")]
    NonFinite,
}

/// Named scalar metrics written as a flat JSON object with sorted keys.
pub type Summary = BTreeMap<String, f64>;

pub fn write_summary(path: &Path, summary: &Summary) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(summary).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")
}

pub fn read_summary(path: &Path) -> std::io::Result<Summary> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}

pub fn add_score(summary: &mut Summary, s: &IdScore) {
    summary.insert("idf1".into(), s.idf1);
    summary.insert("idp".into(), s.idp);
    summary.insert("idr".into(), s.idr);
    summary.insert("idtp".into(), s.idtp as f64);
    summary.insert("idfp".into(), s.idfp as f64);
    summary.insert("idfn".into(), s.idfn as f64);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("summary.json");
        let mut s = Summary::new();
        add_score(&mut s, &IdScore::from_counts(8, 2, 2));
        write_summary(&p, &s).unwrap();
        let back = read_summary(&p).unwrap();
        assert_eq!(back, s);
        assert_eq!(back["idf1"], 80.0);
    }
}
