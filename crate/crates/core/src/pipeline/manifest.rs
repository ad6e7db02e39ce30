use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ingest::{ingest_csv, IngestOptions};
use super::{ClockSpan, ClockTime, ClockWindow, Dataset, DatasetMeta};

fn default_settling() -> u32 {
    60
}

/// Dataset manifest (TOML). Paths are relative to the manifest's directory.
///
/// ```toml
/// building = "RAC-2017"
/// data = "data.csv"
/// fans = ["SF1", "SF2", "RF1", "RF2"]
/// baseline_days = ["2017-09-05", "2017-09-06"]
/// event_day = "2017-09-26"
/// settling_minutes = 60
/// day_mode = { start = "05:00", end = "17:00" }
///
/// [[windows]]
/// label = "morning"
/// start = "09:00"
/// end = "10:00"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub building: String,
    pub data: PathBuf,
    pub fans: Vec<String>,
    pub baseline_days: Vec<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_day: Option<NaiveDate>,
    #[serde(default = "default_settling")]
    pub settling_minutes: u32,
    pub day_mode: ClockSpan,
    /// Clock span of the tensor time mode; the whole day when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor_span: Option<ClockSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_missing_fraction: Option<f64>,
    /// Test windows; the settling period is appended to each. Defaults to
    /// 09:00–10:00 and 13:00–14:00.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<WindowSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub label: String,
    pub start: ClockTime,
    pub end: ClockTime,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    /// Event windows with the settling period appended.
    pub fn event_windows(&self) -> Vec<ClockWindow> {
        if self.windows.is_empty() {
            return super::default_windows(self.settling_minutes);
        }
        self.windows
            .iter()
            .map(|w| ClockWindow {
                label: w.label.clone(),
                span: ClockSpan {
                    start: w.start,
                    end: ClockTime(w.end.minutes() + self.settling_minutes),
                },
            })
            .collect()
    }

    pub fn data_path(&self, manifest_path: &Path) -> PathBuf {
        match manifest_path.parent() {
            Some(dir) if self.data.is_relative() => dir.join(&self.data),
            _ => self.data.clone(),
        }
    }
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let text = toml::to_string(manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    crate::io::write_atomic(path, text.as_bytes())
}

/// Reads a manifest and its CSV, keeping the manifest's fans and days in
/// manifest order. Baseline days dropped for missing data are reported as
/// warnings; losing the event day is an error.
pub fn load_dataset(manifest_path: &Path) -> Result<(Dataset, Vec<String>)> {
    let manifest = Manifest::read(manifest_path)?;
    let data_path = manifest.data_path(manifest_path);
    let options = IngestOptions {
        max_missing_fraction: manifest
            .max_missing_fraction
            .unwrap_or(IngestOptions::default().max_missing_fraction),
    };
    let ingested = ingest_csv(&data_path, &options)?;
    let mut warnings = ingested.warnings;

    let available = |d: &NaiveDate| ingested.meta.days.contains(d);
    let mut days: Vec<NaiveDate> = Vec::new();
    let mut baseline = manifest.baseline_days.clone();
    baseline.sort();
    for d in baseline {
        if available(&d) {
            days.push(d);
        } else {
            let w = format!("baseline day {d} is not available in {}", data_path.display());
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    if let Some(e) = manifest.event_day {
        if !available(&e) {
            return Err(Error::EmptyDataset(format!(
                "event day {e} is missing or was dropped from {}",
                data_path.display()
            )));
        }
        if days.contains(&e) {
            return Err(Error::Manifest(format!("event day {e} is also a baseline day")));
        }
        days.push(e);
    }
    if days.is_empty() {
        return Err(Error::EmptyDataset("no usable days".into()));
    }

    let meta = DatasetMeta {
        building: manifest.building.clone(),
        fans: manifest.fans.clone(),
        days,
        event_day: manifest.event_day,
        day_mode: manifest.day_mode,
        span: manifest.tensor_span.unwrap_or(ClockSpan::FULL_DAY),
        slot_minutes: ingested.meta.slot_minutes,
        windows: manifest.event_windows(),
    };
    Ok((Dataset::new(meta, ingested.series)?, warnings))
}
