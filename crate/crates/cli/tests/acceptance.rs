//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::time::Instant;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fanbase::benchmarks::{
    additive_adjust, avg5_profile, linear_interp_baseline, nearest3of6_profile, nearest3of6_selection, DayHistory,
    NearestDistance,
};
use fanbase::error::Error;
use fanbase::evaluation::{loocv, LoocvOptions, Method, MetricReport};
use fanbase::gcp::{gcp_fit, gradient, objective, FitOptions};
use fanbase::loss::LossSpec;
use fanbase::metrics::{aec, cv, nmbe};
use fanbase::pipeline::{
    aggregate, mask_event_windows, Dataset, DeltaRule, EventWindow, FanSeries, LossKind, TensorConfig, TensorMode,
};
use fanbase::synth::{generate, to_dataset, write_dataset_files, SynthConfig};
use fanbase::tensor::{cp_full, CpModel, Dims, FanPowerTensor, ObservationMask};

const SEEDS: u64 = 10;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn tensor_method(mode: TensorMode, loss: LossKind, delta: DeltaRule, rank: usize) -> Method {
    Method::Tensor(TensorConfig {
        mode,
        loss,
        delta,
        fit: FitOptions {
            rank,
            trials: 4,
            seed: 0,
            ..FitOptions::default()
        },
    })
}

fn quiet() -> LoocvOptions {
    LoocvOptions {
        keep_traces: false,
        ..LoocvOptions::default()
    }
}

fn mean_cv(report: &MetricReport, method: &Method, resolution: u32) -> f64 {
    report.mean_cv(&method.id(), resolution).expect("results present")
}

fn synth_dataset(config: &SynthConfig) -> Dataset {
    let out = generate(config).expect("valid synth config");
    to_dataset(config, &out.observed).expect("dataset")
}

fn majority(flags: &[bool]) -> bool {
    2 * flags.iter().filter(|&&f| f).count() > flags.len()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let dims = Dims::new(4, 3, 5);
    let rank = 2;
    let mut worst: f64 = 0.0;
    for instance in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + instance);
        let params: Vec<f64> = (0..(dims.slots + dims.fans + dims.days) * rank)
            .map(|_| rng.random_range(0.1..1.5))
            .collect();
        let tensor = FanPowerTensor::from_fn(dims, 15, |_, _, _| rng.random_range(0.0..3.0)).unwrap();
        let flags: Vec<bool> = (0..dims.len()).map(|_| rng.random::<f64>() >= 0.3).collect();
        let mask = ObservationMask::from_flags(dims, flags).unwrap();
        for spec in [LossSpec::SquaredError, LossSpec::huber(0.25)] {
            let model = CpModel::from_params(dims, rank, &params).unwrap();
            let g = gradient(&model, &tensor, &mask, spec).unwrap();
            let analytic: Vec<f64> = g.time.iter().chain(g.fan.iter()).chain(g.day.iter()).copied().collect();
            let f = |p: &[f64]| objective(&CpModel::from_params(dims, rank, p).unwrap(), &tensor, &mask, spec).unwrap();
            let mut num = Vec::with_capacity(params.len());
            let mut p = params.clone();
            for n in 0..params.len() {
                let h = 1e-6 * params[n].abs().max(1.0);
                p[n] = params[n] + h;
                let up = f(&p);
                p[n] = params[n] - h;
                let down = f(&p);
                p[n] = params[n];
                num.push((up - down) / (2.0 * h));
            }
            let diff: f64 = analytic.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
            worst = worst.max(diff / norm);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-5 && secs < 5.0,
        format!("worst relative gradient error {worst:.2e} over 40 checks (< 1e-5), {secs:.2}s (< 5s)"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for (rank, tol) in [(1usize, 1e-3), (2, 1e-2)] {
        let config = SynthConfig {
            slot_minutes: 15,
            fans: 4,
            days: 20,
            event_day: false,
            rank,
            noise_std: 0.0,
            ..SynthConfig::default()
        };
        let out = generate(&config).unwrap();
        let windows: Vec<EventWindow> = config
            .clock_windows()
            .iter()
            .map(|w| w.to_event_window(15, fanbase::pipeline::ClockTime(0)))
            .collect();
        assert!(windows.iter().all(|w| w.len() == 8));
        let mask = mask_event_windows(out.observed.dims(), 10, &windows).unwrap();
        let options = FitOptions {
            rank,
            trials: 4,
            seed: 0,
            max_iterations: 5000,
            gradient_tolerance: 1e-10,
            ..FitOptions::default()
        };
        let fit = gcp_fit(&out.observed, &mask, LossSpec::default(), &options).unwrap();
        let est = cp_full(&fit.model, 15).unwrap();
        let err = est
            .values()
            .iter()
            .zip(out.truth.values())
            .map(|(e, t)| (e - t).abs() / t.abs())
            .fold(0.0, f64::max);
        pass &= err < tol;
        details.push(format!("rank {rank}: max rel err {err:.2e} (< {tol:.0e})"));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 30.0;
    outcome(pass, format!("{}, {secs:.1}s (< 30s)", details.join("; ")))
}

fn criterion_3() -> Outcome {
    let huber = tensor_method(TensorMode::PerFan, LossKind::Huber, DeltaRule::RelativeToMedian(0.25), 2);
    let l2 = tensor_method(TensorMode::PerFan, LossKind::L2, DeltaRule::RelativeToMedian(0.25), 2);
    let mut flags = Vec::new();
    let mut lines = Vec::new();
    for seed in 0..SEEDS {
        let config = SynthConfig {
            slot_minutes: 15,
            fans: 4,
            days: 10,
            event_day: false,
            rank: 2,
            outliers: 3,
            outlier_magnitude: 10.0,
            seed,
            ..SynthConfig::default()
        };
        let ds = synth_dataset(&config);
        let h = mean_cv(&loocv(&ds, &huber, 15, &quiet()).unwrap(), &huber, 15);
        let l = mean_cv(&loocv(&ds, &l2, 15, &quiet()).unwrap(), &l2, 15);
        flags.push(h <= 0.5 * l);
        lines.push(format!("s{seed} {h:.3}/{l:.3}"));
    }
    let ok = flags.iter().filter(|&&f| f).count();
    outcome(
        majority(&flags),
        format!("Huber CV <= 0.5 x L2 CV in {ok}/{SEEDS} seeds [huber/l2 %: {}]", lines.join(", ")),
    )
}

fn brute_cv(e: &[f64], a: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mut ss = 0.0;
    let mut sa = 0.0;
    for i in 0..a.len() {
        ss += (e[i] - a[i]) * (e[i] - a[i]);
        sa += a[i];
    }
    100.0 * (ss / (n - 1.0)).sqrt() / (sa / n)
}

fn brute_nmbe(e: &[f64], a: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mut sd = 0.0;
    let mut sa = 0.0;
    for i in 0..a.len() {
        sd += e[i] - a[i];
        sa += a[i];
    }
    100.0 * (sd / (n - 1.0)) / (sa / n)
}

fn brute_aec(e: &[f64], a: &[f64], delta: u32) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += e[i] - a[i];
    }
    s * delta as f64 / 60.0
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..60);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..50.0)).collect();
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..50.0)).collect();
        let delta = [1, 5, 15, 30][rng.random_range(0..4)];
        worst = worst
            .max(rel(cv(&e, &a).unwrap(), brute_cv(&e, &a)))
            .max(rel(nmbe(&e, &a).unwrap(), brute_nmbe(&e, &a)))
            .max(rel(aec(&e, &a, delta).unwrap(), brute_aec(&e, &a, delta)));
    }
    let actual = [10.0, 10.0, 10.0, 10.0];
    let est = [12.0, 10.0, 10.0, 10.0];
    let c = format!("{:.3}", cv(&est, &actual).unwrap());
    let m = format!("{:.3}", nmbe(&est, &actual).unwrap());
    let k = aec(&[2.0], &[0.0], 15).unwrap();
    let examples = c == "11.547" && m == "6.667" && k == 0.5;
    outcome(
        worst < 1e-10 && examples,
        format!("worst relative deviation {worst:.1e} (< 1e-10); cv {c}%, nmbe {m}%, aec {k} kWh"),
    )
}

fn criterion_5() -> Outcome {
    let dims = Dims::new(3, 4, 5);
    let bound = dims.rank_bound();
    let tensor = FanPowerTensor::from_fn(dims, 15, |i, j, k| 1.0 + (i + 2 * j + 3 * k) as f64 * 0.1).unwrap();
    let mask = ObservationMask::all_observed(dims);
    let fit = |rank| {
        gcp_fit(
            &tensor,
            &mask,
            LossSpec::default(),
            &FitOptions {
                rank,
                trials: 1,
                max_iterations: 20,
                ..FitOptions::default()
            },
        )
    };
    let rejected = matches!(fit(bound + 1), Err(Error::RankTooLarge { .. }));
    let accepted = fit(bound).is_ok();
    outcome(
        rejected && accepted,
        format!("bound {bound} for 3x4x5: r={} rejected={rejected}, r={bound} accepted={accepted}", bound + 1),
    )
}

fn date(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2017, 7, d).unwrap()
}

fn history(levels: &[f64], event: Vec<f64>, window: EventWindow) -> DayHistory {
    let len = event.len();
    DayHistory::new(
        1,
        levels.iter().enumerate().map(|(d, &l)| (date(d as u32 + 1), vec![l; len])).collect(),
        date(28),
        event,
        vec![window],
    )
    .unwrap()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ols_worst: f64 = 0.0;
    for _ in 0..100 {
        let len = 120;
        let start = rng.random_range(10..60);
        let end = start + rng.random_range(5..40);
        let fit = rng.random_range(1..8);
        let series: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..40.0)).collect();
        let window = EventWindow::new("w", start, end);
        let base = linear_interp_baseline(&series, &window, fit).unwrap();
        let points: Vec<usize> = (start - fit..start).chain(end + 1..=end + fit).collect();
        let x = DMatrix::from_fn(points.len(), 2, |r, c| if c == 0 { 1.0 } else { points[r] as f64 });
        let y = DVector::from_iterator(points.len(), points.iter().map(|&i| series[i]));
        let coef = x.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        for (n, i) in (start..=end).enumerate() {
            let oracle = coef[0] + coef[1] * i as f64;
            ols_worst = ols_worst.max((base[n] - oracle).abs() / oracle.abs().max(1.0));
        }
    }

    let w = EventWindow::new("w", 30, 39);
    let avg5_const = avg5_profile(&history(&[1.0, 2.0, 3.0, 4.0, 5.0], vec![0.0; 60], w.clone())).unwrap();
    let avg5_recent =
        avg5_profile(&history(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], vec![0.0; 60], w.clone())).unwrap();
    let avg5_ok = avg5_const.iter().all(|&v| v == 3.0) && avg5_recent.iter().all(|&v| v == 5.0);

    let h = history(&[20.0, 10.0, 21.0, 11.0, 22.0, 12.0], vec![11.0; 60], w.clone());
    let mut sel = nearest3of6_selection(&h, (0, 59), NearestDistance::Energy).unwrap();
    sel.sort();
    let prof = nearest3of6_profile(&h, (0, 59), NearestDistance::Energy).unwrap();
    let n3_ok = sel == vec![1, 3, 5] && prof.iter().all(|&v| v == 11.0);

    let mut adj_worst: f64 = 0.0;
    for _ in 0..100 {
        let len = 100;
        let ctx = rng.random_range(1..20);
        let start = rng.random_range(ctx..60);
        let window = EventWindow::new("w", start, start + 10);
        let baseline: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..30.0)).collect();
        let actual: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..30.0)).collect();
        let out = additive_adjust(&baseline, &actual, &window, ctx).unwrap();
        let offset = out[0] - baseline[start];
        let adjusted_ctx = (start - ctx..start).map(|i| baseline[i] + offset).sum::<f64>() / ctx as f64;
        let actual_ctx = (start - ctx..start).map(|i| actual[i]).sum::<f64>() / ctx as f64;
        adj_worst = adj_worst.max((adjusted_ctx - actual_ctx).abs());
    }
    outcome(
        ols_worst < 1e-10 && avg5_ok && n3_ok && adj_worst < 1e-12,
        format!(
            "OLS deviation {ols_worst:.1e} (< 1e-10); avg5 examples {avg5_ok}; nearest3of6 example {n3_ok}; \
             adjusted context error {adj_worst:.1e} (< 1e-12)"
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut kwh_worst: f64 = 0.0;
    let mut avg_worst: f64 = 0.0;
    for _ in 0..50 {
        let values: Vec<f64> = (0..1440).map(|_| rng.random_range(0.0..25.0)).collect();
        let series = FanSeries {
            fan_id: "F".into(),
            day: date(1),
            slot_minutes: 1,
            values: values.clone(),
        };
        let agg = aggregate(&series, 15).unwrap();
        let kwh_1: f64 = values.iter().sum::<f64>() / 60.0;
        let kwh_15: f64 = agg.values.iter().sum::<f64>() * 15.0 / 60.0;
        kwh_worst = kwh_worst.max(rel(kwh_1, kwh_15));
        for (n, v) in agg.values.iter().enumerate() {
            let mut s = 0.0;
            for m in 0..15 {
                s += values[n * 15 + m];
            }
            avg_worst = avg_worst.max(rel(*v, s / 15.0));
        }
    }
    outcome(
        kwh_worst < 1e-9 && avg_worst < 1e-12,
        format!("daily kWh deviation {kwh_worst:.1e} (< 1e-9); re-average deviation {avg_worst:.1e}"),
    )
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        fans: 3,
        days: 8,
        event_day: false,
        seed: 8,
        ..SynthConfig::default()
    };
    let out = generate(&config).unwrap();
    let manifest = write_dataset_files(&config, &out, &dir.path().join("data")).unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        fanbase_cli::run_from([
            "fanbase",
            "--threads",
            "2",
            "study",
            "--manifest",
            manifest.to_str().unwrap(),
            "--methods",
            "tensor,linterp,avg5,n3of6",
            "--resolutions",
            "5,15,30",
            "--rank",
            "2",
            "--seed",
            "11",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .unwrap();
        read_dir_bytes(&out_dir)
    };
    let first = run("a");
    let second = run("b");
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    outcome(
        first == second && first.len() >= 4,
        format!("{} report files byte-identical across runs: {}", first.len(), names.join(", ")),
    )
}

fn criterion_9() -> Outcome {
    let tensor = tensor_method(TensorMode::PerFan, LossKind::Huber, DeltaRule::Absolute(0.25), 2);
    let all = [tensor, Method::LinearInterp, Method::Avg5, Method::Nearest3of6];
    let resolutions = [1u32, 5, 15, 30];
    let mut flags = Vec::new();
    let mut lines = Vec::new();
    let mut grid_ok = true;
    for seed in 0..SEEDS {
        let config = SynthConfig {
            fans: 4,
            days: 8,
            event_day: false,
            rank: 2,
            noise_std: 0.5,
            seed,
            ..SynthConfig::default()
        };
        let ds = synth_dataset(&config);
        let (methods, res): (&[Method], &[u32]) = if seed == 0 {
            (&all, &resolutions)
        } else {
            (&all[..1], &[1, 15])
        };
        let mut reports = Vec::new();
        for &r in res {
            for m in methods {
                reports.push(loocv(&ds, m, r, &quiet()).unwrap());
            }
        }
        let report = MetricReport::merge(reports);
        if seed == 0 {
            for m in &all {
                for &r in &resolutions {
                    for w in ["morning", "afternoon"] {
                        grid_ok &= report.summary(&m.id(), r, w).is_some_and(|s| s.days > 0);
                    }
                }
            }
        }
        let (c1, c15) = (mean_cv(&report, &tensor, 1), mean_cv(&report, &tensor, 15));
        flags.push(c15 <= c1);
        lines.push(format!("s{seed} {c15:.2}/{c1:.2}"));
    }
    let ok = flags.iter().filter(|&&f| f).count();
    outcome(
        grid_ok && majority(&flags),
        format!(
            "full 4 methods x {{1,5,15,30}} grid emitted: {grid_ok}; 15-min CV <= 1-min CV in {ok}/{SEEDS} seeds \
             [15/1 %: {}]",
            lines.join(", ")
        ),
    )
}

fn criterion_10() -> Outcome {
    let per_fan = tensor_method(TensorMode::PerFan, LossKind::Huber, DeltaRule::Absolute(0.25), 2);
    let total = tensor_method(TensorMode::Total, LossKind::Huber, DeltaRule::Absolute(0.25), 2);
    let mut flags = Vec::new();
    let mut lines = Vec::new();
    for seed in 0..SEEDS {
        let config = SynthConfig {
            slot_minutes: 15,
            fans: 4,
            days: 10,
            event_day: false,
            rank: 2,
            noise_std: 0.5,
            seed,
            ..SynthConfig::default()
        };
        let ds = synth_dataset(&config);
        let p = mean_cv(&loocv(&ds, &per_fan, 15, &quiet()).unwrap(), &per_fan, 15);
        let t = mean_cv(&loocv(&ds, &total, 15, &quiet()).unwrap(), &total, 15);
        flags.push(p <= t);
        lines.push(format!("s{seed} {p:.3}/{t:.3}"));
    }
    let ok = flags.iter().filter(|&&f| f).count();
    outcome(
        majority(&flags),
        format!("per-fan CV <= total CV in {ok}/{SEEDS} seeds [per-fan/total %: {}]", lines.join(", ")),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", criterion_1),
        ("exact completion", criterion_2),
        ("Huber robustness", criterion_3),
        ("metric oracles", criterion_4),
        ("rank guard", criterion_5),
        ("benchmark correctness", criterion_6),
        ("aggregation", criterion_7),
        ("end-to-end determinism", criterion_8),
        ("granularity study", criterion_9),
        ("per-fan vs total", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let label = format!("criterion {}", n + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{label} ({name}): {} | {} | {:.1}s",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
