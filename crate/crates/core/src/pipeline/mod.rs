//! From per-fan power series to a masked fan power tensor and a total-fan
//! baseline over event windows.

mod aggregate;
mod assemble;
mod config;
mod estimate;
mod ingest;
mod manifest;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::MINUTES_PER_DAY;

pub use aggregate::aggregate;
pub use assemble::{assemble_tensor, mask_event_windows};
pub(crate) use assemble::add_event_windows;
pub(crate) use aggregate::average_groups;
pub use config::{DeltaRule, LossKind, TensorConfig};
pub use estimate::{estimate_baseline, estimate_event_day, BaselineEstimate, EventEstimate, WindowBaseline};
pub use ingest::{ingest_csv, write_csv, IngestOptions, Ingested};
pub use manifest::{load_dataset, write_manifest, Manifest, WindowSpec};

/// Native resolution of submeter data.
pub const NATIVE_MINUTES: u32 = 1;

/// Resolutions the study grid runs over.
pub const STUDY_RESOLUTIONS: [u32; 4] = [1, 5, 15, 30];

/// One fan's power on one day, covering the whole day at `slot_minutes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanSeries {
    pub fan_id: String,
    pub day: NaiveDate,
    pub slot_minutes: u32,
    pub values: Vec<f64>,
}

/// Minute-of-day, printed as `hh:mm`. `24:00` is accepted as end of day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClockTime(pub u32);

impl ClockTime {
    pub fn minutes(self) -> u32 {
        self.0
    }
}

impl FromStr for ClockTime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Manifest(format!("invalid clock time '{s}' (expected hh:mm)"));
        let (h, m) = s.trim().split_once(':').ok_or_else(bad)?;
        let h: u32 = h.parse().map_err(|_| bad())?;
        let m: u32 = m.parse().map_err(|_| bad())?;
        if m >= 60 || h * 60 + m > MINUTES_PER_DAY {
            return Err(bad());
        }
        Ok(ClockTime(h * 60 + m))
    }
}

impl fmt::Display for ClockTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.0 / 60, self.0 % 60)
    }
}

impl Serialize for ClockTime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClockTime {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Half-open clock interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockSpan {
    pub start: ClockTime,
    pub end: ClockTime,
}

impl ClockSpan {
    pub const FULL_DAY: ClockSpan = ClockSpan {
        start: ClockTime(0),
        end: ClockTime(MINUTES_PER_DAY),
    };

    pub fn new(start: u32, end: u32) -> Self {
        ClockSpan {
            start: ClockTime(start),
            end: ClockTime(end),
        }
    }

    pub fn minutes(&self) -> u32 {
        self.end.0.saturating_sub(self.start.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.end <= self.start || self.end.0 > MINUTES_PER_DAY {
            return Err(Error::Manifest(format!(
                "empty or inverted clock span {}-{}",
                self.start, self.end
            )));
        }
        Ok(())
    }

    /// Slot range `[first, last]` (inclusive) covering this span at `slot_minutes`,
    /// counting slots from `origin`.
    pub fn to_slots(&self, slot_minutes: u32, origin: ClockTime) -> (usize, usize) {
        let rel_start = self.start.0.saturating_sub(origin.0);
        let rel_end = self.end.0.saturating_sub(origin.0);
        let first = rel_start / slot_minutes;
        let last = rel_end.div_ceil(slot_minutes).max(first + 1) - 1;
        (first as usize, last as usize)
    }
}

/// Contiguous slot range `[start, end]` (zero-based, inclusive) within a day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventWindow {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl EventWindow {
    pub fn new(label: impl Into<String>, start: usize, end: usize) -> Self {
        EventWindow {
            label: label.into(),
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, slot: usize) -> bool {
        (self.start..=self.end).contains(&slot)
    }

    pub fn slots(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    pub fn check(&self, slots: usize) -> Result<()> {
        if self.start > self.end || self.end >= slots {
            return Err(Error::WindowOutOfRange {
                label: self.label.clone(),
                start: self.start,
                end: self.end,
                slots,
            });
        }
        Ok(())
    }
}

/// Rejects invalid or mutually overlapping windows.
pub fn check_windows(windows: &[EventWindow], slots: usize) -> Result<()> {
    for w in windows {
        w.check(slots)?;
    }
    for (a, w) in windows.iter().enumerate() {
        for v in &windows[a + 1..] {
            if w.start <= v.end && v.start <= w.end {
                return Err(Error::OverlappingWindows(format!("{} and {}", w.label, v.label)));
            }
        }
    }
    Ok(())
}

/// An event window on the clock, settling period included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockWindow {
    pub label: String,
    pub span: ClockSpan,
}

impl ClockWindow {
    pub fn to_event_window(&self, slot_minutes: u32, origin: ClockTime) -> EventWindow {
        let (start, end) = self.span.to_slots(slot_minutes, origin);
        EventWindow::new(self.label.clone(), start, end)
    }
}

/// Morning and afternoon tests (9–10am, 1–2pm) each followed by a one-hour
/// settling window.
pub fn default_windows(settling_minutes: u32) -> Vec<ClockWindow> {
    [("morning", 9 * 60, 10 * 60), ("afternoon", 13 * 60, 14 * 60)]
        .into_iter()
        .map(|(label, start, end)| ClockWindow {
            label: label.to_string(),
            span: ClockSpan::new(start, end + settling_minutes),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TensorMode {
    /// T × N × S, one slice per fan.
    PerFan,
    /// T × 1 × S holding the fan total.
    Total,
}

impl TensorMode {
    pub fn name(self) -> &'static str {
        match self {
            TensorMode::PerFan => "per-fan",
            TensorMode::Total => "total",
        }
    }
}

impl FromStr for TensorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-fan" | "perfan" | "fan" => Ok(TensorMode::PerFan),
            "total" => Ok(TensorMode::Total),
            other => Err(Error::InvalidOption(format!("unknown tensor mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub building: String,
    pub fans: Vec<String>,
    /// Baseline days in date order, then the event day (if any) last.
    pub days: Vec<NaiveDate>,
    pub event_day: Option<NaiveDate>,
    pub day_mode: ClockSpan,
    /// Clock span covered by the time mode of assembled tensors.
    pub span: ClockSpan,
    pub slot_minutes: u32,
    pub windows: Vec<ClockWindow>,
}

impl DatasetMeta {
    pub fn baseline_days(&self) -> &[NaiveDate] {
        match self.event_day {
            Some(_) => &self.days[..self.days.len() - 1],
            None => &self.days,
        }
    }

    pub fn event_day_index(&self) -> Option<usize> {
        self.event_day.map(|_| self.days.len() - 1)
    }

    pub fn day_index(&self, day: NaiveDate) -> Option<usize> {
        self.days.iter().position(|&d| d == day)
    }

    /// Slots in the tensor time mode at the current resolution.
    pub fn tensor_slots(&self) -> usize {
        (self.span.minutes() / self.slot_minutes) as usize
    }

    /// Event windows as tensor slot ranges at the current resolution.
    pub fn event_windows(&self) -> Vec<EventWindow> {
        self.windows
            .iter()
            .map(|w| w.to_event_window(self.slot_minutes, self.span.start))
            .collect()
    }

    /// Day-mode span as an inclusive slot range relative to the tensor span.
    pub fn day_mode_slots(&self) -> (usize, usize) {
        self.day_mode.to_slots(self.slot_minutes, self.span.start)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fans.is_empty() {
            return Err(Error::Manifest("no fans listed".into()));
        }
        let mut fans = self.fans.clone();
        fans.sort();
        fans.dedup();
        if fans.len() != self.fans.len() {
            return Err(Error::Manifest("duplicate fan ids".into()));
        }
        let mut days = self.days.clone();
        days.sort();
        days.dedup();
        if days.len() != self.days.len() {
            return Err(Error::Manifest("duplicate days".into()));
        }
        if let Some(e) = self.event_day {
            if self.days.last() != Some(&e) {
                return Err(Error::Manifest("event day must be the last day".into()));
            }
        }
        if self.slot_minutes == 0 || 60 % self.slot_minutes != 0 {
            return Err(Error::Manifest(format!(
                "resolution {} must divide 60",
                self.slot_minutes
            )));
        }
        self.span.validate()?;
        self.day_mode.validate()?;
        if !self.span.start.0.is_multiple_of(self.slot_minutes) || !self.span.end.0.is_multiple_of(self.slot_minutes) {
            return Err(Error::Manifest(format!(
                "tensor span {}-{} is not aligned to {}-minute slots",
                self.span.start, self.span.end, self.slot_minutes
            )));
        }
        for w in &self.windows {
            w.span.validate()?;
            if w.span.start < self.span.start || w.span.end > self.span.end {
                return Err(Error::Manifest(format!(
                    "window {} lies outside the tensor span",
                    w.label
                )));
            }
        }
        check_windows(&self.event_windows(), self.tensor_slots())
    }
}

/// Per-fan, per-day series plus their metadata. Series are indexed
/// `[day][fan]` in metadata order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    series: Vec<Vec<FanSeries>>,
}

impl Dataset {
    pub fn new(meta: DatasetMeta, series: Vec<FanSeries>) -> Result<Self> {
        meta.validate()?;
        let slots = (MINUTES_PER_DAY / meta.slot_minutes) as usize;
        let mut grid: Vec<Vec<Option<FanSeries>>> = vec![vec![None; meta.fans.len()]; meta.days.len()];
        for s in series {
            let (Some(k), Some(j)) = (
                meta.day_index(s.day),
                meta.fans.iter().position(|f| *f == s.fan_id),
            ) else {
                continue;
            };
            if s.slot_minutes != meta.slot_minutes || s.values.len() != slots {
                return Err(Error::DimensionMismatch(format!(
                    "series {} on {} has {} slots of {} minutes, expected {slots} of {}",
                    s.fan_id,
                    s.day,
                    s.values.len(),
                    s.slot_minutes,
                    meta.slot_minutes
                )));
            }
            grid[k][j] = Some(s);
        }
        let mut out = Vec::with_capacity(grid.len());
        for (k, row) in grid.into_iter().enumerate() {
            let mut day = Vec::with_capacity(row.len());
            for (j, s) in row.into_iter().enumerate() {
                day.push(s.ok_or_else(|| Error::MissingSeries {
                    fan: meta.fans[j].clone(),
                    day: meta.days[k].to_string(),
                })?);
            }
            out.push(day);
        }
        Ok(Dataset { meta, series: out })
    }

    pub fn series(&self, day: usize, fan: usize) -> &FanSeries {
        &self.series[day][fan]
    }

    pub fn all_series(&self) -> impl Iterator<Item = &FanSeries> {
        self.series.iter().flatten()
    }

    /// Whole-day total fan power for one day.
    pub fn total_series(&self, day: usize) -> Vec<f64> {
        let day = &self.series[day];
        (0..day[0].values.len())
            .map(|i| day.iter().map(|s| s.values[i]).sum())
            .collect()
    }

    pub fn aggregate(&self, target_minutes: u32) -> Result<Dataset> {
        let series = self
            .all_series()
            .map(|s| aggregate(s, target_minutes))
            .collect::<Result<Vec<_>>>()?;
        let meta = DatasetMeta {
            slot_minutes: target_minutes,
            ..self.meta.clone()
        };
        Dataset::new(meta, series)
    }

    /// Copy with one fan-day series replaced.
    pub fn with_series(&self, day: usize, fan: usize, values: Vec<f64>) -> Dataset {
        let mut out = self.clone();
        out.series[day][fan].values = values;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_time_parsing() {
        assert_eq!("09:00".parse::<ClockTime>().unwrap(), ClockTime(540));
        assert_eq!("24:00".parse::<ClockTime>().unwrap(), ClockTime(1440));
        assert!("24:01".parse::<ClockTime>().is_err());
        assert!("9".parse::<ClockTime>().is_err());
        assert_eq!(ClockTime(785).to_string(), "13:05");
    }

    #[test]
    fn span_to_slots() {
        // 9–11am at 15 minutes: slots 36..=43 (zero-based)
        assert_eq!(ClockSpan::new(540, 660).to_slots(15, ClockTime(0)), (36, 43));
        assert_eq!(ClockSpan::new(540, 660).to_slots(1, ClockTime(0)), (540, 659));
        // misaligned spans are widened to whole slots
        assert_eq!(ClockSpan::new(545, 650).to_slots(30, ClockTime(0)), (18, 21));
        assert_eq!(ClockSpan::new(540, 660).to_slots(15, ClockTime(300)), (16, 23));
    }

    #[test]
    fn default_windows_include_settling() {
        let w = default_windows(60);
        assert_eq!(w[0].span, ClockSpan::new(540, 660));
        assert_eq!(w[1].span, ClockSpan::new(780, 900));
    }

    #[test]
    fn overlapping_windows_rejected() {
        let ws = [EventWindow::new("a", 2, 5), EventWindow::new("b", 5, 7)];
        assert!(matches!(check_windows(&ws, 10), Err(Error::OverlappingWindows(_))));
        let ws = [EventWindow::new("a", 2, 5), EventWindow::new("b", 6, 7)];
        check_windows(&ws, 10).unwrap();
        assert!(matches!(
            check_windows(&[EventWindow::new("a", 2, 10)], 10),
            Err(Error::WindowOutOfRange { .. })
        ));
    }
}
