//! Score streams: one JSON object per line and tick,
//! `{"tick","score","warmup","alarm"?,"top":[{"bus","score"}],"error"?}`.
//! Bus ids are case-file bus numbers.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::ScoreSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopSensor {
    pub bus: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub tick: usize,
    pub score: f64,
    pub warmup: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alarm: Option<bool>,
    pub top: Vec<TopSensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn score_records(series: &ScoreSeries) -> Vec<ScoreRecord> {
    series
        .ticks
        .iter()
        .enumerate()
        .map(|(i, t)| ScoreRecord {
            tick: t.tick,
            score: t.score,
            warmup: t.warmup,
            alarm: t.alarm,
            top: series
                .top(i)
                .into_iter()
                .map(|(bus, score)| TopSensor { bus, score })
                .collect(),
            error: t.error.clone(),
        })
        .collect()
}

pub fn write_scores(path: &Path, series: &ScoreSeries) -> Result<()> {
    let mut out = Vec::new();
    for rec in score_records(series) {
        serde_json::to_writer(&mut out, &rec).map_err(|e| Error::input(format!("serializing scores: {e}")))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(&line).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?;
        out.push(rec);
    }
    Ok(out)
}
