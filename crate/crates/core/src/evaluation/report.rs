use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::pipeline::ClockTime;

use super::{MetricReport, WindowTrace};

fn finish(writer: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    writer
        .into_inner()
        .map_err(|e| Error::io("<memory>", e.error()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::io("<memory>", e)
}

/// One row per (day, window, method, metric).
pub fn results_csv(report: &MetricReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["day", "window", "method", "resolution", "metric", "value"])
        .map_err(csv_err)?;
    for r in &report.results {
        for (metric, value) in [("cv", r.cv), ("nmbe", r.nmbe), ("aec", r.aec)] {
            w.write_record([
                r.day.to_string(),
                r.window.clone(),
                r.method.clone(),
                r.resolution.to_string(),
                metric.to_string(),
                value.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// One row per (method, resolution, window, metric).
pub fn summary_csv(report: &MetricReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "resolution",
        "window",
        "metric",
        "days",
        "mean",
        "std",
        "ci95_half_width",
    ])
    .map_err(csv_err)?;
    for s in &report.summaries {
        for (metric, stat, ci) in [
            ("cv", &s.cv, None),
            ("nmbe", &s.nmbe, None),
            ("aec", &s.aec, s.aec_ci_half_width),
        ] {
            w.write_record([
                s.method.clone(),
                s.resolution.to_string(),
                s.window.clone(),
                metric.to_string(),
                s.days.to_string(),
                stat.mean.to_string(),
                stat.std.to_string(),
                ci.map(|c| c.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Actual and estimated total power per window slot, one column per method,
/// for every trace at `resolution`.
pub fn plot_csv(report: &MetricReport, resolution: u32) -> Result<Vec<u8>> {
    let traces: Vec<&WindowTrace> = report.traces.iter().filter(|t| t.resolution == resolution).collect();
    let mut methods: Vec<&str> = Vec::new();
    let mut windows: Vec<&str> = Vec::new();
    for t in &traces {
        if !methods.contains(&t.method.as_str()) {
            methods.push(&t.method);
        }
        if !windows.contains(&t.window.as_str()) {
            windows.push(&t.window);
        }
    }
    let window_rank = |w: &str| windows.iter().position(|x| *x == w).unwrap_or(usize::MAX);
    let mut groups: BTreeMap<(NaiveDate, usize), Vec<&WindowTrace>> = BTreeMap::new();
    for t in &traces {
        groups.entry((t.day, window_rank(&t.window))).or_default().push(t);
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["day".to_string(), "window".into(), "clock".into(), "actual".into()];
    header.extend(methods.iter().map(|m| m.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for ((day, _), group) in groups {
        let first = group[0];
        for (slot, actual) in first.actual.iter().enumerate() {
            let clock = ClockTime(first.start_minute + slot as u32 * resolution);
            let mut row = vec![day.to_string(), first.window.clone(), clock.to_string(), actual.to_string()];
            for m in &methods {
                let cell = group
                    .iter()
                    .find(|t| t.method == *m)
                    .and_then(|t| t.estimate.get(slot))
                    .map(|v| v.to_string())
                    .unwrap_or_default();
                row.push(cell);
            }
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub results: PathBuf,
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Writes `report.json`, `results.csv`, `summary.csv` and one
/// `plot_<δ>min.csv` per resolution into `dir`, each atomically.
pub fn write_report_files(report: &MetricReport, dir: &Path) -> Result<ReportFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("report.json");
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::io(&json, e))?;
    write_atomic(&json, text.as_bytes())?;
    let results = dir.join("results.csv");
    write_atomic(&results, &results_csv(report)?)?;
    let summary = dir.join("summary.csv");
    write_atomic(&summary, &summary_csv(report)?)?;

    let mut resolutions: Vec<u32> = report.traces.iter().map(|t| t.resolution).collect();
    resolutions.sort();
    resolutions.dedup();
    let mut plots = Vec::new();
    for r in resolutions {
        let path = dir.join(format!("plot_{r}min.csv"));
        write_atomic(&path, &plot_csv(report, r)?)?;
        plots.push(path);
    }
    Ok(ReportFiles {
        json,
        results,
        summary,
        plots,
    })
}
