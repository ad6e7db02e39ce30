//! Comparison baselines on whole-day total fan power series: linear
//! interpolation across the window, the 5-day average and Nearest3of6, the
//! last two with an additive adjustment to the load just before the window.
//!
//! Everything here is deterministic; no randomness is involved.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::EventWindow;

/// Baseline days averaged by the 5-day method.
pub const AVG_DAYS: usize = 5;
/// Candidate and selected day counts for Nearest3of6.
pub const NEAREST_CANDIDATES: usize = 6;
pub const NEAREST_SELECTED: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NearestDistance {
    /// `|E_d − E_event|` with `E` the day-mode energy outside event windows.
    Energy,
    /// Euclidean distance between the same day-mode, non-event slot profiles.
    Profile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    /// Length of each side of the linear fit.
    pub fit_minutes: u32,
    /// Span before the window used for the additive adjustment.
    pub context_minutes: u32,
    pub distance: NearestDistance,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions {
            fit_minutes: 5,
            context_minutes: 15,
            distance: NearestDistance::Energy,
        }
    }
}

fn minutes_to_slots(minutes: u32, slot_minutes: u32) -> usize {
    minutes.div_ceil(slot_minutes).max(1) as usize
}

/// Prior baseline days and the day being estimated, all as whole-day total
/// power at one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DayHistory {
    pub slot_minutes: u32,
    /// Prior baseline days in increasing date order.
    pub days: Vec<(NaiveDate, Vec<f64>)>,
    pub event_date: NaiveDate,
    pub event: Vec<f64>,
    /// Every event window of the event day (settling included).
    pub windows: Vec<EventWindow>,
}

impl DayHistory {
    pub fn new(
        slot_minutes: u32,
        days: Vec<(NaiveDate, Vec<f64>)>,
        event_date: NaiveDate,
        event: Vec<f64>,
        windows: Vec<EventWindow>,
    ) -> Result<Self> {
        let len = event.len();
        if let Some((d, s)) = days.iter().find(|(_, s)| s.len() != len) {
            return Err(Error::DimensionMismatch(format!(
                "series for {d} has {} slots, event day has {len}",
                s.len()
            )));
        }
        if days.windows(2).any(|w| w[0].0 >= w[1].0) || days.last().is_some_and(|(d, _)| *d >= event_date) {
            return Err(Error::InvalidOption(
                "history dates must be strictly increasing and precede the event day".into(),
            ));
        }
        crate::pipeline::check_windows(&windows, len)?;
        Ok(DayHistory {
            slot_minutes,
            days,
            event_date,
            event,
            windows,
        })
    }

    fn most_recent(&self, count: usize) -> Result<&[(NaiveDate, Vec<f64>)]> {
        if self.days.len() < count {
            return Err(Error::InsufficientHistory {
                needed: count,
                available: self.days.len(),
            });
        }
        Ok(&self.days[self.days.len() - count..])
    }
}

/// Closed-form least squares line `y = a + b·t`.
pub fn ols_line(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let t_mean = t.iter().sum::<f64>() / n;
    let y_mean = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (ti, yi) in t.iter().zip(y) {
        sxy += (ti - t_mean) * (yi - y_mean);
        sxx += (ti - t_mean) * (ti - t_mean);
    }
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (y_mean - b * t_mean, b)
}

/// Least squares line through the `fit_slots` slots on each side of the
/// window, evaluated at the window slots.
pub fn linear_interp_baseline(
    event: &[f64],
    window: &EventWindow,
    fit_slots: usize,
) -> Result<Vec<f64>> {
    if fit_slots == 0 || window.start < fit_slots || window.end + fit_slots >= event.len() {
        return Err(Error::InsufficientContext(format!(
            "window {} [{}, {}] needs {fit_slots} slots on both sides within {} slots",
            window.label,
            window.start,
            window.end,
            event.len()
        )));
    }
    let slots: Vec<usize> = (window.start - fit_slots..window.start)
        .chain(window.end + 1..=window.end + fit_slots)
        .collect();
    let t: Vec<f64> = slots.iter().map(|&i| i as f64).collect();
    let y: Vec<f64> = slots.iter().map(|&i| event[i]).collect();
    let (a, b) = ols_line(&t, &y);
    Ok(window.slots().map(|i| a + b * i as f64).collect())
}

fn mean_profile<'a>(days: impl Iterator<Item = &'a Vec<f64>>, len: usize) -> Vec<f64> {
    let mut sum = vec![0.0; len];
    let mut count = 0usize;
    for d in days {
        for (s, v) in sum.iter_mut().zip(d) {
            *s += v;
        }
        count += 1;
    }
    sum.iter().map(|s| s / count as f64).collect()
}

/// Shifts the window part of a whole-day `baseline` so that its mean over the
/// `context_slots` slots before the window matches the event day's.
pub fn additive_adjust(
    baseline: &[f64],
    event: &[f64],
    window: &EventWindow,
    context_slots: usize,
) -> Result<Vec<f64>> {
    if context_slots == 0 || window.start < context_slots || window.end >= baseline.len() {
        return Err(Error::InsufficientContext(format!(
            "window {} starts at slot {} but needs {context_slots} context slots",
            window.label, window.start
        )));
    }
    let ctx = window.start - context_slots..window.start;
    let actual = event[ctx.clone()].iter().sum::<f64>() / context_slots as f64;
    let estimate = baseline[ctx].iter().sum::<f64>() / context_slots as f64;
    let offset = actual - estimate;
    Ok(window.slots().map(|i| baseline[i] + offset).collect())
}

/// Whole-day per-slot mean of the five most recent prior days, unadjusted.
pub fn avg5_profile(history: &DayHistory) -> Result<Vec<f64>> {
    let days = history.most_recent(AVG_DAYS)?;
    Ok(mean_profile(days.iter().map(|(_, s)| s), history.event.len()))
}

pub fn avg5_baseline(
    history: &DayHistory,
    window: &EventWindow,
    options: &BenchmarkOptions,
) -> Result<Vec<f64>> {
    let profile = avg5_profile(history)?;
    additive_adjust(
        &profile,
        &history.event,
        window,
        minutes_to_slots(options.context_minutes, history.slot_minutes),
    )
}

/// Indices into `history.days` of the three candidates closest to the event
/// day, closest first. Equal distances go to the more recent day.
pub fn nearest3of6_selection(
    history: &DayHistory,
    day_mode: (usize, usize),
    distance: NearestDistance,
) -> Result<Vec<usize>> {
    history.most_recent(NEAREST_CANDIDATES)?;
    let slots: Vec<usize> = (day_mode.0..=day_mode.1.min(history.event.len() - 1))
        .filter(|&i| !history.windows.iter().any(|w| w.contains(i)))
        .collect();
    let hours = history.slot_minutes as f64 / 60.0;
    let energy = |s: &[f64]| slots.iter().map(|&i| s[i]).sum::<f64>() * hours;
    let event_energy = energy(&history.event);

    let first = history.days.len() - NEAREST_CANDIDATES;
    // most recent first, so a stable sort keeps recency order among ties
    let mut ranked: Vec<(usize, f64)> = (first..history.days.len())
        .rev()
        .map(|d| {
            let s = &history.days[d].1;
            let dist = match distance {
                NearestDistance::Energy => (energy(s) - event_energy).abs(),
                NearestDistance::Profile => slots
                    .iter()
                    .map(|&i| (s[i] - history.event[i]).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            };
            (d, dist)
        })
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(ranked.into_iter().take(NEAREST_SELECTED).map(|(d, _)| d).collect())
}

pub fn nearest3of6_profile(
    history: &DayHistory,
    day_mode: (usize, usize),
    distance: NearestDistance,
) -> Result<Vec<f64>> {
    let selected = nearest3of6_selection(history, day_mode, distance)?;
    Ok(mean_profile(
        selected.iter().map(|&d| &history.days[d].1),
        history.event.len(),
    ))
}

pub fn nearest3of6_baseline(
    history: &DayHistory,
    window: &EventWindow,
    day_mode: (usize, usize),
    options: &BenchmarkOptions,
) -> Result<Vec<f64>> {
    let profile = nearest3of6_profile(history, day_mode, options.distance)?;
    additive_adjust(
        &profile,
        &history.event,
        window,
        minutes_to_slots(options.context_minutes, history.slot_minutes),
    )
}

pub fn linear_interp_for(
    history: &DayHistory,
    window: &EventWindow,
    options: &BenchmarkOptions,
) -> Result<Vec<f64>> {
    linear_interp_baseline(
        &history.event,
        window,
        minutes_to_slots(options.fit_minutes, history.slot_minutes),
    )
}
