use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use gridcast_cli::run_from;
use gridcast_core::evaluation::{gen_panel, SyntheticSpec};
use gridcast_core::panel::write_panel_csv;

fn gridcast(dir: &Path, args: &[&str]) -> anyhow::Result<Vec<PathBuf>> {
    let out = dir.to_str().unwrap();
    let mut full = vec!["gridcast", "--out", out];
    full.extend_from_slice(args);
    run_from(full)
}

fn small_spec(dir: &Path) -> PathBuf {
    let p = dir.join("spec.toml");
    fs::write(&p, "counties = 3\nhours = 400\nseed = 5\n").unwrap();
    p
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, "[selection]\nk = 6\npca_components = 6\n").unwrap();
    p
}

fn simulate(dir: &Path) -> PathBuf {
    let spec = small_spec(dir);
    let sim = dir.join("sim");
    gridcast(&sim, &["simulate", "--spec", spec.to_str().unwrap()]).unwrap();
    sim.join("panel.csv")
}

#[test]
fn simulate_writes_one_row_per_county_hour() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    gridcast(&a, &["simulate"]).unwrap();
    gridcast(&b, &["simulate"]).unwrap();
    let text = fs::read_to_string(a.join("panel.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 10 * 2000);
    assert_eq!(text, fs::read_to_string(b.join("panel.csv")).unwrap());

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[arma]\nphi = 1.0\ntheta = 0.0\nsigma2 = 1.0\n").unwrap();
    assert!(gridcast(&tmp.path().join("c"), &["simulate", "--spec", bad.to_str().unwrap()]).is_err());
}

#[test]
fn clean_writes_panel_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let input = simulate(tmp.path());
    let out = tmp.path().join("clean");
    let written = gridcast(&out, &["clean", "--input", input.to_str().unwrap()]).unwrap();
    assert_eq!(written.len(), 2);
    assert!(out.join("cleaned.csv").exists());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("cleaning_report.json")).unwrap()).unwrap();
    assert!(report["dropped_zero_variance"].as_array().unwrap().is_empty());

    let missing = tmp.path().join("nope.csv");
    let err = gridcast(&out, &["clean", "--input", missing.to_str().unwrap()]).unwrap_err();
    assert!(format!("{err:#}").contains("nope.csv"));
}

#[test]
fn clean_repairs_only_listed_timestamps() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        counties: 2,
        hours: 100,
        ..SyntheticSpec::default()
    };
    let mut panel = gen_panel(&spec).unwrap();
    for t in [10, 40] {
        for f in 0..panel.n_features() {
            for c in 0..2 {
                panel.set_weather(f, c, t, 0.0);
            }
        }
    }
    let input = tmp.path().join("zeros.csv");
    write_panel_csv(&panel, fs::File::create(&input).unwrap()).unwrap();
    let ts = panel.time().timestamp(40).format("%Y-%m-%dT%H:%M:%SZ").to_string();
    let out = tmp.path().join("out");
    gridcast(&out, &["clean", "--input", input.to_str().unwrap(), "--timestamps", &ts]).unwrap();
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("cleaning_report.json")).unwrap()).unwrap();
    let repaired = report["repaired_timestamps"].as_array().unwrap();
    assert_eq!(repaired.len(), 1);
    assert_eq!(repaired[0].as_str().unwrap(), ts);
}

#[test]
fn select_reports_provenance_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let input = simulate(tmp.path());
    let cfg = small_config(tmp.path());
    let run = |name: &str| {
        let out = tmp.path().join(name);
        gridcast(&out, &["--config", cfg.to_str().unwrap(), "select", "--input", input.to_str().unwrap()]).unwrap();
        out
    };
    let a = run("a");
    let b = run("b");
    for f in ["selection.json", "pca_loadings.csv", "explained_variance.csv", "selection_categories.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("selection.json")).unwrap()).unwrap();
    let kept = report["kept"].as_array().unwrap();
    assert!(!kept.is_empty());
    assert!(kept.iter().all(|k| k["provenance"].is_string()));

    let too_many = tmp.path().join("k.toml");
    fs::write(&too_many, "[selection]\nk = 50\n").unwrap();
    assert!(gridcast(
        &tmp.path().join("c"),
        &["--config", too_many.to_str().unwrap(), "select", "--input", input.to_str().unwrap()]
    )
    .is_err());
}

#[test]
fn forecast_covers_every_county_horizon_and_step() {
    let tmp = tempfile::tempdir().unwrap();
    let input = simulate(tmp.path());
    let cfg = small_config(tmp.path());
    let sel = tmp.path().join("sel");
    gridcast(&sel, &["--config", cfg.to_str().unwrap(), "select", "--input", input.to_str().unwrap()]).unwrap();
    let out = tmp.path().join("fc");
    let selection = sel.join("selection.json");
    gridcast(
        &out,
        &[
            "--config",
            cfg.to_str().unwrap(),
            "forecast",
            "--input",
            input.to_str().unwrap(),
            "--selection",
            selection.to_str().unwrap(),
            "--plots",
            "--dump-design",
        ],
    )
    .unwrap();
    let csv = fs::read_to_string(out.join("forecasts.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "county,horizon,step,timestamp,prediction");
    assert_eq!(csv.lines().count(), 1 + 3 * (24 + 48));
    for line in csv.lines().skip(1) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }
    assert_eq!(fs::read_to_string(out.join("statewide.csv")).unwrap().lines().count(), 1 + 24 + 48);
    for c in ["county_00", "county_01", "county_02"] {
        for h in [24, 48] {
            assert!(out.join(format!("plots/{c}_{h}.svg")).exists());
        }
        assert!(out.join(format!("design/{c}.csv")).exists());
    }
    let audit: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("audit.json")).unwrap()).unwrap();
    assert_eq!(audit.as_array().unwrap().len(), 6);
}

#[test]
fn forecast_audit_marks_degenerate_county_naive() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        counties: 2,
        hours: 300,
        ..SyntheticSpec::default()
    };
    let mut panel = gen_panel(&spec).unwrap();
    for t in 0..300 {
        panel.set_outage(1, t, 0.0);
        panel.set_tracked(1, t, 0.0);
    }
    let input = tmp.path().join("panel.csv");
    write_panel_csv(&panel, fs::File::create(&input).unwrap()).unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("fc");
    gridcast(&out, &["--config", cfg.to_str().unwrap(), "forecast", "--input", input.to_str().unwrap()]).unwrap();
    let audit: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("audit.json")).unwrap()).unwrap();
    for m in audit.as_array().unwrap() {
        let expect = if m["county"] == "county_01" { "NAIVE" } else { "SARIMAX" };
        assert_eq!(m["level"], expect);
    }
}

#[test]
fn backtest_table_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let input = simulate(tmp.path());
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("bt");
    gridcast(
        &out,
        &["--config", cfg.to_str().unwrap(), "backtest", "--input", input.to_str().unwrap(), "--plots", "--cutoffs", "2023-01-15T00:00:00Z"],
    )
    .unwrap();
    let text = fs::read_to_string(out.join("backtest.txt")).unwrap();
    let table: Vec<&str> = text.lines().take(3).collect();
    assert!(table[0].starts_with("Method") && table[0].contains("RMSE") && table[0].ends_with("Improvement"));
    assert!(table[1].starts_with("Baseline (predict all zeros)") && table[1].ends_with('-'));
    let imp = table[2].split_whitespace().last().unwrap();
    let digits = imp.strip_suffix('%').unwrap();
    assert_eq!(digits.split('.').nth(1).unwrap().len(), 1);
    for c in ["county_00", "county_01", "county_02"] {
        assert!(out.join(format!("plots/{c}_24.svg")).exists());
    }
    let late = gridcast(
        &tmp.path().join("late"),
        &["--config", cfg.to_str().unwrap(), "backtest", "--input", input.to_str().unwrap(), "--cutoffs", "2023-01-17T00:00:00Z"],
    );
    assert!(late.is_err());
}

#[test]
fn artifacts_do_not_depend_on_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = simulate(tmp.path());
    let cfg = small_config(tmp.path());
    let run = |cmd: &str, jobs: &str| {
        let out = tmp.path().join(format!("{cmd}_{jobs}"));
        gridcast(&out, &["--config", cfg.to_str().unwrap(), "--jobs", jobs, "--seed", "3", cmd, "--input", input.to_str().unwrap()]).unwrap();
        out
    };
    for (cmd, files) in [
        ("forecast", &["forecasts.csv", "statewide.csv", "audit.json"][..]),
        ("backtest", &["backtest_records.csv", "backtest.json", "backtest.txt"][..]),
    ] {
        let one = run(cmd, "1");
        let four = run(cmd, "4");
        for f in files {
            assert_eq!(fs::read(one.join(f)).unwrap(), fs::read(four.join(f)).unwrap(), "{cmd} {f}");
        }
    }
}

#[test]
fn binary_exits_nonzero_and_names_missing_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gridcast"))
        .args(["--out", tmp.path().to_str().unwrap(), "clean", "--input", "/definitely/missing.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/definitely/missing.csv"));

    let ok = Command::new(env!("CARGO_BIN_EXE_gridcast"))
        .args(["--out", tmp.path().to_str().unwrap(), "simulate"])
        .output()
        .unwrap();
    assert!(ok.status.success());
}
