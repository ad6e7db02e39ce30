use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};

use crate::error::{Error, Result};
use crate::tensor::MINUTES_PER_DAY;

use super::{default_windows, ClockSpan, Dataset, DatasetMeta, FanSeries, NATIVE_MINUTES};

const HEADER: [&str; 3] = ["timestamp", "fan_id", "power_kw"];
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

/// Per-minute readings of one fan-day: `None` = no row, `Some(None)` = empty power.
type DaySlots = Vec<Option<Option<f64>>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    /// A day is dropped when any fan misses more than this fraction of its slots.
    pub max_missing_fraction: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            max_missing_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub series: Vec<FanSeries>,
    /// Fans in order of first appearance, days in date order, no event day.
    pub meta: DatasetMeta,
    pub warnings: Vec<String>,
}

/// Reads 1-minute per-fan power from CSV (`timestamp,fan_id,power_kw`).
///
/// Parse errors carry the file line number (the header is line 1). Gaps are
/// filled by linear interpolation between the nearest readings; days where any
/// fan misses more than the allowed fraction are dropped with a warning.
pub fn ingest_csv(path: &Path, options: &IngestOptions) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(std::io::BufReader::new(file));
    let parse_err = |row: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        reason,
    };

    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(parse_err(1, format!("expected header '{}'", HEADER.join(","))));
    }

    let slots = MINUTES_PER_DAY as usize;
    let mut fans: Vec<String> = Vec::new();
    let mut raw: BTreeMap<NaiveDate, HashMap<String, DaySlots>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            parse_err(row, e.to_string())
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 3 {
            return Err(parse_err(row, format!("expected 3 fields, got {}", record.len())));
        }
        let ts = NaiveDateTime::parse_from_str(&record[0], TIMESTAMP_FORMAT)
            .map_err(|e| parse_err(row, format!("bad timestamp '{}': {e}", &record[0])))?;
        let fan = &record[1];
        if fan.is_empty() {
            return Err(parse_err(row, "empty fan_id".into()));
        }
        let power = match &record[2] {
            "" => None,
            s => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| parse_err(row, format!("bad power_kw '{s}'")))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(parse_err(row, format!("power_kw must be finite and >= 0, got {s}")));
                }
                Some(v)
            }
        };
        if !fans.iter().any(|f| f == fan) {
            fans.push(fan.to_string());
        }
        let slot = (ts.hour() * 60 + ts.minute()) as usize;
        let day = raw.entry(ts.date()).or_default();
        let cells = day.entry(fan.to_string()).or_insert_with(|| vec![None; slots]);
        if cells[slot].is_some() {
            return Err(parse_err(row, format!("duplicate reading for {fan} at {}", &record[0])));
        }
        cells[slot] = Some(power);
    }
    if raw.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no data rows", path.display())));
    }

    let mut series = Vec::new();
    let mut days = Vec::new();
    let mut warnings = Vec::new();
    for (date, by_fan) in raw {
        let mut filled = Vec::with_capacity(fans.len());
        let mut dropped = None;
        for fan in &fans {
            let values: Vec<Option<f64>> = by_fan
                .get(fan)
                .map(|cells| cells.iter().map(|c| c.flatten()).collect())
                .unwrap_or_else(|| vec![None; slots]);
            let missing = values.iter().filter(|v| v.is_none()).count();
            let fraction = missing as f64 / slots as f64;
            if fraction > options.max_missing_fraction || missing == slots {
                dropped = Some(format!(
                    "dropping {date}: fan {fan} is missing {:.1}% of its readings",
                    100.0 * fraction
                ));
                break;
            }
            filled.push(FanSeries {
                fan_id: fan.clone(),
                day: date,
                slot_minutes: NATIVE_MINUTES,
                values: fill_gaps(&values),
            });
        }
        match dropped {
            Some(w) => {
                log::warn!("{w}");
                warnings.push(w);
            }
            None => {
                days.push(date);
                series.extend(filled);
            }
        }
    }
    if days.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "every day in {} was dropped for missing data",
            path.display()
        )));
    }

    let building = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(Ingested {
        series,
        meta: DatasetMeta {
            building,
            fans,
            days,
            event_day: None,
            day_mode: ClockSpan::new(6 * 60, 18 * 60),
            span: ClockSpan::FULL_DAY,
            slot_minutes: NATIVE_MINUTES,
            windows: default_windows(60),
        },
        warnings,
    })
}

/// Linear interpolation between the nearest known neighbours; leading and
/// trailing gaps take the nearest known value.
fn fill_gaps(values: &[Option<f64>]) -> Vec<f64> {
    let known: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    let mut out = Vec::with_capacity(values.len());
    let mut next: usize = 0;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = v {
            out.push(*v);
            next += 1;
            continue;
        }
        let before = next.checked_sub(1).map(|b| known[b]);
        let after = known.get(next).copied();
        out.push(match (before, after) {
            (Some((i0, v0)), Some((i1, v1))) => {
                v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64
            }
            (Some((_, v)), None) | (None, Some((_, v))) => v,
            (None, None) => 0.0,
        });
    }
    out
}

/// Writes a 1-minute dataset in the ingestion CSV format.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let meta = &dataset.meta;
    if meta.slot_minutes != NATIVE_MINUTES {
        return Err(Error::IncompatibleResolution {
            native: meta.slot_minutes,
            target: NATIVE_MINUTES,
        });
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::io(path, e);
    writer.write_record(HEADER).map_err(io_err)?;
    for (k, day) in meta.days.iter().enumerate() {
        for slot in 0..MINUTES_PER_DAY as usize {
            let ts = day
                .and_hms_opt(slot as u32 / 60, slot as u32 % 60, 0)
                .expect("minute of day")
                .format(TIMESTAMP_FORMAT)
                .to_string();
            for (j, fan) in meta.fans.iter().enumerate() {
                let v = dataset.series(k, j).values[slot];
                writer
                    .write_record([ts.as_str(), fan.as_str(), &v.to_string()])
                    .map_err(io_err)?;
            }
        }
    }
    let bytes = writer.into_inner().map_err(|e| Error::io(path, e))?;
    crate::io::write_atomic(path, &bytes)
}
