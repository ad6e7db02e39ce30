use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fanbase::error::Error;
use fanbase_cli::CliError;

fn fanbase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fanbase"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, config: &str, extra: &[&str]) -> PathBuf {
    let cfg = dir.join(format!("{name}.toml"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(name);
    let mut args = vec!["synth", "--config", path(&cfg), "--out", path(&out)];
    args.extend_from_slice(extra);
    let res = fanbase(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    out.join("manifest.toml")
}

fn summary_rows(dir: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(dir.join("summary.csv")).unwrap();
    r.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

fn mean_cv(dir: &Path, method: &str) -> f64 {
    let rows: Vec<f64> = summary_rows(dir)
        .into_iter()
        .filter(|r| r[0] == method && r[3] == "cv")
        .map(|r| r[5].parse().unwrap())
        .collect();
    rows.iter().sum::<f64>() / rows.len() as f64
}

#[test]
fn estimate_happy_path_and_total_mode() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "ds", "fans = 3\ndays = 10\n", &[]);
    let out = dir.path().join("est");
    let res = fanbase(&[
        "estimate", "--manifest", path(&manifest), "--resolution", "15", "--rank", "12", "--loss", "huber",
        "--delta", "0.25", "--seed", "7", "--out", path(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let mut reader = csv::Reader::from_path(out.join("baseline.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.iter().filter(|r| &r[0] == "morning").count(), 8);
    assert_eq!(rows.iter().filter(|r| &r[0] == "afternoon").count(), 8);
    assert_eq!(&rows[0][2], "09:00");
    let fit: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["rank"], 12);
    assert_eq!(fit["trials"].as_array().unwrap().len(), 4);

    let total = dir.path().join("total");
    let res = fanbase(&[
        "estimate", "--manifest", path(&manifest), "--mode", "total", "--rank", "4", "--out", path(&total),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let fit: serde_json::Value = serde_json::from_slice(&std::fs::read(total.join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["mode"], "total");
}

#[test]
fn missing_data_file_exits_1_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "ds", "fans = 1\ndays = 2\n", &[]);
    std::fs::remove_file(dir.path().join("ds").join("data.csv")).unwrap();
    let res = fanbase(&["estimate", "--manifest", path(&manifest), "--out", path(&dir.path().join("o"))]);
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8(res.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    let line: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(line["error"]["exit_code"], 1);
    assert!(line["error"]["message"].as_str().unwrap().contains("data.csv"));
}

#[test]
fn bad_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "fans = 0\n").unwrap();
    let res = fanbase(&["synth", "--config", path(&cfg), "--out", path(&dir.path().join("x"))]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("InvalidConfig"));

    let res = fanbase(&["study", "--manifest", "m.toml", "--resolutions", "7"]);
    assert_eq!(res.status.code(), Some(1));
    let res = fanbase(&["estimate", "--bogus"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn numerical_failures_map_to_exit_2() {
    assert_eq!(CliError::from(Error::NonFiniteObjective).code, 2);
    assert_eq!(CliError::from(Error::EmptyDataset("x".into())).code, 1);
    let line = CliError::from(Error::NonFiniteObjective).to_line();
    assert!(!line.contains('\n'));
    assert!(line.contains("\"kind\":\"NonFiniteObjective\""));
}

#[test]
fn study_emits_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "ds", "fans = 2\ndays = 8\nevent_day = false\n", &[]);
    let out = dir.path().join("study");
    let res = fanbase(&[
        "study", "--manifest", path(&manifest), "--methods", "tensor,linterp,avg5,n3of6", "--resolutions",
        "1,5,15,30", "--rank", "2", "--trials", "2", "--out", path(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    // methods × resolutions × windows × metrics
    assert_eq!(summary_rows(&out).len(), 4 * 4 * 2 * 3);
    for r in [1, 5, 15, 30] {
        assert!(out.join(format!("plot_{r}min.csv")).exists());
    }
}

#[test]
fn study_is_byte_identical_for_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "ds", "fans = 2\ndays = 8\nevent_day = false\n", &[]);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let res = fanbase(&[
            "--threads", "2", "study", "--manifest", path(&manifest), "--resolutions", "15,30", "--rank", "2",
            "--seed", "3", "--out", path(&out),
        ]);
        assert!(res.status.success());
        ["report.json", "results.csv", "summary.csv", "plot_15min.csv", "plot_30min.csv"]
            .map(|f| std::fs::read(out.join(f)).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn huber_beats_l2_with_outliers() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(
        dir.path(),
        "ds",
        "fans = 3\ndays = 8\nevent_day = false\noutliers = 3\noutlier_magnitude = 10.0\nseed = 4\n",
        &[],
    );
    let out = dir.path().join("study");
    let res = fanbase(&[
        "study", "--manifest", path(&manifest), "--methods", "tensor", "--resolutions", "15", "--losses",
        "huber,l2", "--rank", "2", "--delta", "0.25", "--delta-relative", "--out", path(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let huber = mean_cv(&out, "tensor/per-fan/huber");
    let l2 = mean_cv(&out, "tensor/per-fan/l2");
    assert!(huber < l2, "huber {huber} vs l2 {l2}");
}

#[test]
fn synth_is_deterministic_and_noise_free_data_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "fans = 2\ndays = 6\nevent_day = false\n";
    let a = synth(dir.path(), "a", cfg, &["--seed", "9", "--noise", "0", "--outliers", "0"]);
    let b = synth(dir.path(), "b", cfg, &["--seed", "9", "--noise", "0", "--outliers", "0"]);
    for f in ["data.csv", "manifest.toml"] {
        assert_eq!(
            std::fs::read(a.parent().unwrap().join(f)).unwrap(),
            std::fs::read(b.parent().unwrap().join(f)).unwrap()
        );
    }
    let out = dir.path().join("study");
    let res = fanbase(&[
        "study", "--manifest", path(&a), "--methods", "tensor", "--resolutions", "15", "--rank", "2", "--out",
        path(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let cv = mean_cv(&out, "tensor/per-fan/huber");
    assert!(cv < 1.0, "mean cv {cv}");
}

#[test]
fn default_synth_loads_for_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    let res = fanbase(&["synth", "--out", path(&out)]);
    assert!(res.status.success());
    let (ds, warnings) = fanbase::pipeline::load_dataset(&out.join("manifest.toml")).unwrap();
    assert!(warnings.is_empty());
    assert!(ds.meta.event_day.is_some());
    assert_eq!(ds.meta.baseline_days().len(), 20);
}
