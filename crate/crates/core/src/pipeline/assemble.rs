use std::collections::HashMap;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::tensor::{Dims, FanPowerTensor, ObservationMask};

use super::{check_windows, Dataset, DatasetMeta, EventWindow, FanSeries, TensorMode};

/// Builds the T × N × S tensor (or T × 1 × S fan total) with fan and day
/// order taken from `meta`, restricted to `meta.span`.
pub fn assemble_tensor(
    series: &[FanSeries],
    meta: &DatasetMeta,
    mode: TensorMode,
) -> Result<FanPowerTensor> {
    let lookup: HashMap<(&str, NaiveDate), &FanSeries> = series
        .iter()
        .filter(|s| s.slot_minutes == meta.slot_minutes)
        .map(|s| ((s.fan_id.as_str(), s.day), s))
        .collect();
    let mut grid: Vec<Vec<&[f64]>> = Vec::with_capacity(meta.days.len());
    let first = (meta.span.start.minutes() / meta.slot_minutes) as usize;
    let slots = meta.tensor_slots();
    for &day in &meta.days {
        let mut row = Vec::with_capacity(meta.fans.len());
        for fan in &meta.fans {
            let s = lookup
                .get(&(fan.as_str(), day))
                .ok_or_else(|| Error::MissingSeries {
                    fan: fan.clone(),
                    day: day.to_string(),
                })?;
            let values = s.values.get(first..first + slots).ok_or_else(|| {
                Error::DimensionMismatch(format!(
                    "series {fan} on {day} has {} slots, span needs {}",
                    s.values.len(),
                    first + slots
                ))
            })?;
            row.push(values);
        }
        grid.push(row);
    }
    build(&grid, meta.slot_minutes, slots, mode)
}

fn build(
    grid: &[Vec<&[f64]>],
    slot_minutes: u32,
    slots: usize,
    mode: TensorMode,
) -> Result<FanPowerTensor> {
    let days = grid.len();
    let fans = grid.first().map_or(0, Vec::len);
    match mode {
        TensorMode::PerFan => FanPowerTensor::from_fn(
            Dims::new(slots, fans, days),
            slot_minutes,
            |i, j, k| grid[k][j][i],
        ),
        TensorMode::Total => FanPowerTensor::from_fn(Dims::new(slots, 1, days), slot_minutes, |i, _, k| {
            grid[k].iter().map(|s| s[i]).sum()
        }),
    }
}

impl Dataset {
    pub fn tensor(&self, mode: TensorMode) -> Result<FanPowerTensor> {
        let series: Vec<FanSeries> = self.all_series().cloned().collect();
        assemble_tensor(&series, &self.meta, mode)
    }
}

/// Marks every slot inside any window on `event_day` as unobserved for all
/// fans; everything else stays observed.
pub fn mask_event_windows(
    dims: Dims,
    event_day: usize,
    windows: &[EventWindow],
) -> Result<ObservationMask> {
    let mut mask = ObservationMask::all_observed(dims);
    add_event_windows(&mut mask, event_day, windows)?;
    Ok(mask)
}

pub(crate) fn add_event_windows(
    mask: &mut ObservationMask,
    event_day: usize,
    windows: &[EventWindow],
) -> Result<()> {
    let dims = mask.dims();
    if event_day >= dims.days {
        return Err(Error::WindowOutOfRange {
            label: format!("event day {event_day}"),
            start: event_day,
            end: event_day,
            slots: dims.days,
        });
    }
    check_windows(windows, dims.slots)?;
    for w in windows {
        for i in w.slots() {
            for j in 0..dims.fans {
                mask.set(i, j, event_day, false);
            }
        }
    }
    Ok(())
}
