//! CSV and JSON record types written by the command-line tools.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// One estimated (or true) object in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub frame: u32,
    pub run: usize,
    pub variant: String,
    pub label_birth_time: u32,
    pub label_index: u32,
    pub x: f64,
    pub y: f64,
    pub exist_prob: f64,
}

/// Per-frame OSPA and cardinality for one run and variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub frame: u32,
    pub run: usize,
    pub variant: String,
    pub ospa: f64,
    pub ospa_loc: f64,
    pub ospa_card: f64,
    pub est_card: usize,
    pub true_card: usize,
    /// Frame contains an occlusion or a low-SNR object.
    pub challenging: bool,
}

/// One detection extracted from a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub frame: u32,
    pub index: usize,
    pub x: f64,
    pub y: f64,
}

/// Compact per-frame view of the posterior written as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySnapshot {
    pub frame: u32,
    pub components: usize,
    pub cardinality_pmf: Vec<f64>,
    pub top: Vec<ComponentSummary>,
    pub existence: Vec<LabelExistence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub weight: f64,
    /// `[birth_time, index]` per label.
    pub labels: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelExistence {
    pub label: [u32; 2],
    pub exist_prob: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
