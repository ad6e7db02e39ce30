//! Leave-one-out evaluation over baseline days and the resulting reports.
//!
//! Each baseline day in turn is treated as a pseudo-event day: its windows
//! are hidden (tensor method) or only earlier days are used as history
//! (benchmarks), and the estimate is scored against the held-out truth.

mod report;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{self, BenchmarkOptions, DayHistory};
use crate::error::{Error, Result};
use crate::gcp::FitOptions;
use crate::metrics::{aec, confidence_interval, cv, mean_std, nmbe_with};
use crate::pipeline::{
    add_event_windows, average_groups, estimate_baseline, ClockTime, Dataset, EventWindow, TensorConfig,
};
use crate::seed::derive_seed;
use crate::tensor::{FanPowerTensor, ObservationMask};

pub use report::{plot_csv, results_csv, summary_csv, write_report_files, ReportFiles};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Tensor(TensorConfig),
    LinearInterp,
    Avg5,
    Nearest3of6,
}

impl Method {
    pub fn id(&self) -> String {
        match self {
            Method::Tensor(c) => c.id(),
            Method::LinearInterp => "linterp".into(),
            Method::Avg5 => "avg5".into(),
            Method::Nearest3of6 => "n3of6".into(),
        }
    }

    /// Minimum number of baseline days a fold needs before the held-out day.
    fn prior_days_needed(&self) -> usize {
        match self {
            Method::Tensor(_) | Method::LinearInterp => 0,
            Method::Avg5 => benchmarks::AVG_DAYS,
            Method::Nearest3of6 => benchmarks::NEAREST_CANDIDATES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoocvOptions {
    pub benchmark: BenchmarkOptions,
    /// Use the `|τ|` divisor for NMBE instead of `|τ| − 1`.
    pub conventional_nmbe: bool,
    /// Keep per-slot estimate/actual traces for plot data.
    pub keep_traces: bool,
}

impl Default for LoocvOptions {
    fn default() -> Self {
        LoocvOptions {
            benchmark: BenchmarkOptions::default(),
            conventional_nmbe: false,
            keep_traces: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub method: String,
    pub resolution: u32,
    pub day: NaiveDate,
    pub window: String,
    /// Percent.
    pub cv: f64,
    /// Percent.
    pub nmbe: f64,
    /// kWh.
    pub aec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTrace {
    pub method: String,
    pub resolution: u32,
    pub day: NaiveDate,
    pub window: String,
    /// Clock minute at the start of the first window slot.
    pub start_minute: u32,
    pub estimate: Vec<f64>,
    pub actual: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub day: NaiveDate,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub method: String,
    pub resolution: u32,
    pub evaluated: Vec<NaiveDate>,
    pub skipped: Vec<SkippedFold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub resolution: u32,
    pub window: String,
    pub days: usize,
    pub cv: MetricSummary,
    pub nmbe: MetricSummary,
    pub aec: MetricSummary,
    /// `1.96·std(AEC)/√S`; absent with fewer than two days.
    pub aec_ci_half_width: Option<f64>,
}

/// Monthly-data calibration tolerances, reported for context only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceContext {
    pub nmbe_percent: f64,
    pub cv_percent: f64,
}

impl Default for ToleranceContext {
    fn default() -> Self {
        ToleranceContext {
            nmbe_percent: 5.0,
            cv_percent: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub building: String,
    pub results: Vec<WindowResult>,
    pub summaries: Vec<Summary>,
    pub coverage: Vec<Coverage>,
    pub tolerance_context: ToleranceContext,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub traces: Vec<WindowTrace>,
}

impl MetricReport {
    fn new(building: String, results: Vec<WindowResult>, coverage: Vec<Coverage>, traces: Vec<WindowTrace>) -> Self {
        let summaries = summarize(&results);
        MetricReport {
            building,
            results,
            summaries,
            coverage,
            tolerance_context: ToleranceContext::default(),
            traces,
        }
    }

    /// Concatenates reports in order and recomputes the summaries.
    pub fn merge(reports: Vec<MetricReport>) -> MetricReport {
        let building = reports.first().map(|r| r.building.clone()).unwrap_or_default();
        let mut results = Vec::new();
        let mut coverage = Vec::new();
        let mut traces = Vec::new();
        for r in reports {
            results.extend(r.results);
            coverage.extend(r.coverage);
            traces.extend(r.traces);
        }
        MetricReport::new(building, results, coverage, traces)
    }

    pub fn summary(&self, method: &str, resolution: u32, window: &str) -> Option<&Summary> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.resolution == resolution && s.window == window)
    }

    /// Mean CV over all windows' per-day results of one method/resolution.
    pub fn mean_cv(&self, method: &str, resolution: u32) -> Option<f64> {
        let v: Vec<f64> = self
            .results
            .iter()
            .filter(|r| r.method == method && r.resolution == resolution)
            .map(|r| r.cv)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Groups by (method, resolution, window) in order of first appearance.
fn summarize(results: &[WindowResult]) -> Vec<Summary> {
    let mut keys: Vec<(String, u32, String)> = Vec::new();
    for r in results {
        let key = (r.method.clone(), r.resolution, r.window.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, resolution, window)| {
            let group: Vec<&WindowResult> = results
                .iter()
                .filter(|r| r.method == method && r.resolution == resolution && r.window == window)
                .collect();
            let stat = |f: fn(&WindowResult) -> f64| {
                let v: Vec<f64> = group.iter().map(|r| f(r)).collect();
                let (mean, std) = mean_std(&v);
                MetricSummary { mean, std }
            };
            let aec_values: Vec<f64> = group.iter().map(|r| r.aec).collect();
            Summary {
                days: group.len(),
                cv: stat(|r| r.cv),
                nmbe: stat(|r| r.nmbe),
                aec: stat(|r| r.aec),
                aec_ci_half_width: confidence_interval(&aec_values).ok().map(|(_, h)| h),
                method,
                resolution,
                window,
            }
        })
        .collect()
}

/// Fold-specific fit seed.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    derive_seed(seed, "loocv-fold", fold as u64)
}

/// Observation mask for one tensor fold: the held-out day's windows and, if
/// present, the real event day's windows are unobserved.
pub fn fold_mask(dataset: &Dataset, tensor: &FanPowerTensor, fold: usize) -> Result<ObservationMask> {
    let windows = dataset.meta.event_windows();
    let mut mask = ObservationMask::all_observed(tensor.dims());
    add_event_windows(&mut mask, fold, &windows)?;
    if let Some(e) = dataset.meta.event_day_index() {
        add_event_windows(&mut mask, e, &windows)?;
    }
    Ok(mask)
}

struct FoldOutput {
    results: Vec<WindowResult>,
    traces: Vec<WindowTrace>,
}

enum FoldOutcome {
    Done(FoldOutput),
    Skipped(String),
}

struct Scorer<'a> {
    method_id: String,
    resolution: u32,
    options: &'a LoocvOptions,
}

impl Scorer<'_> {
    fn score(
        &self,
        day: NaiveDate,
        window: &EventWindow,
        start_minute: u32,
        estimate: Vec<f64>,
        actual: Vec<f64>,
    ) -> Result<(WindowResult, WindowTrace)> {
        let result = WindowResult {
            method: self.method_id.clone(),
            resolution: self.resolution,
            day,
            window: window.label.clone(),
            cv: cv(&estimate, &actual)?,
            nmbe: nmbe_with(&estimate, &actual, self.options.conventional_nmbe)?,
            aec: aec(&estimate, &actual, self.resolution)?,
        };
        let trace = WindowTrace {
            method: self.method_id.clone(),
            resolution: self.resolution,
            day,
            window: window.label.clone(),
            start_minute,
            estimate,
            actual,
        };
        Ok((result, trace))
    }
}

/// Leave-one-out evaluation of one method at one resolution. `dataset` holds
/// native-resolution series; it is aggregated to `resolution` for the tensor
/// method, while benchmarks run at native resolution and their estimates are
/// averaged to `resolution` before scoring.
pub fn loocv(
    dataset: &Dataset,
    method: &Method,
    resolution: u32,
    options: &LoocvOptions,
) -> Result<MetricReport> {
    let scorer = Scorer {
        method_id: method.id(),
        resolution,
        options,
    };
    let folds = dataset.meta.baseline_days().len();
    let outcomes: Vec<FoldOutcome> = match method {
        Method::Tensor(config) => {
            if folds < 2 {
                return Err(Error::InsufficientHistory {
                    needed: 2,
                    available: folds,
                });
            }
            let agg = dataset.aggregate(resolution)?;
            let tensor = agg.tensor(config.mode)?;
            (0..folds)
                .into_par_iter()
                .map(|k| tensor_fold(&agg, &tensor, config, k, &scorer))
                .collect::<Result<_>>()?
        }
        _ => {
            if !resolution.is_multiple_of(dataset.meta.slot_minutes) {
                return Err(Error::IncompatibleResolution {
                    native: dataset.meta.slot_minutes,
                    target: resolution,
                });
            }
            let totals: Vec<Vec<f64>> = (0..dataset.meta.days.len()).map(|k| dataset.total_series(k)).collect();
            (0..folds)
                .into_par_iter()
                .map(|k| benchmark_fold(dataset, &totals, method, k, &scorer))
                .collect::<Result<_>>()?
        }
    };

    let mut results = Vec::new();
    let mut traces = Vec::new();
    let mut coverage = Coverage {
        method: scorer.method_id.clone(),
        resolution,
        evaluated: Vec::new(),
        skipped: Vec::new(),
    };
    for (k, outcome) in outcomes.into_iter().enumerate() {
        let day = dataset.meta.days[k];
        match outcome {
            FoldOutcome::Done(out) => {
                coverage.evaluated.push(day);
                results.extend(out.results);
                if options.keep_traces {
                    traces.extend(out.traces);
                }
            }
            FoldOutcome::Skipped(reason) => {
                log::warn!("{} @ {resolution} min: skipping {day}: {reason}", scorer.method_id);
                coverage.skipped.push(SkippedFold { day, reason });
            }
        }
    }
    Ok(MetricReport::new(
        dataset.meta.building.clone(),
        results,
        vec![coverage],
        traces,
    ))
}

fn tensor_fold(
    agg: &Dataset,
    tensor: &FanPowerTensor,
    config: &TensorConfig,
    k: usize,
    scorer: &Scorer<'_>,
) -> Result<FoldOutcome> {
    let windows = agg.meta.event_windows();
    let mask = fold_mask(agg, tensor, k)?;
    let spec = config.loss_for(tensor, &mask, agg.meta.day_mode_slots())?;
    let fit = FitOptions {
        seed: fold_seed(config.fit.seed, k),
        ..config.fit
    };
    let estimate = estimate_baseline(tensor, &mask, spec, &fit, k, &windows)?;
    let day = agg.meta.days[k];
    let origin = agg.meta.span.start.minutes();
    let mut out = FoldOutput {
        results: Vec::new(),
        traces: Vec::new(),
    };
    for wb in estimate.windows {
        let w = &wb.window;
        let actual: Vec<f64> = w
            .slots()
            .map(|i| (0..tensor.dims().fans).map(|j| tensor.get(i, j, k)).sum())
            .collect();
        let start_minute = origin + w.start as u32 * agg.meta.slot_minutes;
        match scorer.score(day, w, start_minute, wb.values, actual) {
            Ok((r, t)) => {
                out.results.push(r);
                out.traces.push(t);
            }
            Err(e) => return Ok(FoldOutcome::Skipped(e.to_string())),
        }
    }
    Ok(FoldOutcome::Done(out))
}

fn benchmark_fold(
    dataset: &Dataset,
    totals: &[Vec<f64>],
    method: &Method,
    k: usize,
    scorer: &Scorer<'_>,
) -> Result<FoldOutcome> {
    let meta = &dataset.meta;
    let native = meta.slot_minutes;
    let ratio = (scorer.resolution / native) as usize;
    let day = meta.days[k];
    let prior = meta.baseline_days()[..k].len();
    if prior < method.prior_days_needed() {
        return Ok(FoldOutcome::Skipped(
            Error::InsufficientHistory {
                needed: method.prior_days_needed(),
                available: prior,
            }
            .to_string(),
        ));
    }
    // Windows are laid out on the scoring grid, then expanded to native slots.
    let windows: Vec<EventWindow> = meta
        .windows
        .iter()
        .map(|w| {
            let coarse = w.to_event_window(scorer.resolution, ClockTime(0));
            EventWindow::new(coarse.label, coarse.start * ratio, (coarse.end + 1) * ratio - 1)
        })
        .collect();
    let history = DayHistory::new(
        native,
        (0..k).map(|d| (meta.days[d], totals[d].clone())).collect(),
        day,
        totals[k].clone(),
        windows.clone(),
    )?;
    let day_mode = meta.day_mode.to_slots(native, ClockTime(0));
    let opts = &scorer.options.benchmark;

    let mut out = FoldOutput {
        results: Vec::new(),
        traces: Vec::new(),
    };
    for w in &windows {
        let estimate = match method {
            Method::LinearInterp => benchmarks::linear_interp_for(&history, w, opts),
            Method::Avg5 => benchmarks::avg5_baseline(&history, w, opts),
            Method::Nearest3of6 => benchmarks::nearest3of6_baseline(&history, w, day_mode, opts),
            Method::Tensor(_) => unreachable!("tensor folds are handled separately"),
        };
        let estimate = match estimate {
            Ok(e) => e,
            Err(e @ (Error::InsufficientHistory { .. } | Error::InsufficientContext(_))) => {
                return Ok(FoldOutcome::Skipped(e.to_string()))
            }
            Err(e) => return Err(e),
        };
        let actual = &totals[k][w.start..=w.end];
        let start_minute = w.start as u32 * native;
        match scorer.score(
            day,
            w,
            start_minute,
            average_groups(&estimate, ratio),
            average_groups(actual, ratio),
        ) {
            Ok((r, t)) => {
                out.results.push(r);
                out.traces.push(t);
            }
            Err(e) => return Ok(FoldOutcome::Skipped(e.to_string())),
        }
    }
    Ok(FoldOutcome::Done(out))
}
