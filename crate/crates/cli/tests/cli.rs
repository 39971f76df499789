//! End-to-end tests of the binary: exit codes, file outputs, determinism,
//! and the reproduce presets at toy ensemble sizes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bundle-sim"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bundle-sim-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_CFG: &str = "[system]\n\
n_emitters = 2\n\
pumped = 1,2\n\
[run]\n\
n_trajectories = 80\n\
master_seed = 7\n\
t_end = 3.0\n";

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn config_errors_map_to_exit_codes() {
    let dir = tmp_dir("codes");

    // unknown key -> usage error (2)
    let bad = write_cfg(&dir, "bad.cfg", "[system]\nn_emitterz = 3\n");
    let out = bin()
        .args(["spectrum", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.join("o1"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_emitterz"));

    // negative rate -> usage error at parse time with the key named
    let bad = write_cfg(&dir, "neg.cfg", "[system]\ngamma = -0.5\n");
    let out = bin()
        .args(["spectrum", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.join("o2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));

    // missing config file
    let out = bin()
        .args(["spectrum", "--config", "/nonexistent/x.cfg"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_on_empty_log_is_no_data() {
    let dir = tmp_dir("nodata");
    let log = write_cfg(
        &dir,
        "empty.log",
        "# bundle-sim click log v1\n# fingerprint=0x0 trajectories=3\n# columns: trajectory_id time channel\n",
    );
    let out = bin()
        .args(["stats", "--log"])
        .arg(&log)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(6));
}

#[test]
fn click_logs_are_deterministic_and_worker_invariant() {
    let dir = tmp_dir("det");
    let cfg = write_cfg(&dir, "run.cfg", SMALL_CFG);

    let run = |out_name: &str, workers: &str| {
        run_ok(
            bin()
                .args([
                    "trajectories",
                    "--deterministic",
                    "--workers",
                    workers,
                    "--config",
                ])
                .arg(&cfg)
                .arg("--out")
                .arg(dir.join(out_name)),
        );
        std::fs::read(dir.join(out_name).join("clicks.log")).unwrap()
    };
    let a = run("a", "1");
    let b = run("b", "2");
    let c = run("c", "1");
    assert_eq!(a, b, "worker count changed the click log");
    assert_eq!(a, c, "repeated run changed the click log");

    // changing the seed changes the log
    run_ok(
        bin()
            .args(["trajectories", "--deterministic", "--seed", "8", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join("d")),
    );
    let d = std::fs::read(dir.join("d").join("clicks.log")).unwrap();
    assert_ne!(a, d);
}

#[test]
fn tables_round_trip_through_shortest_float_format() {
    let dir = tmp_dir("roundtrip");
    let cfg = write_cfg(
        &dir,
        "run.cfg",
        "[system]\nn_emitters = 1\npumped = 1\n[run]\nt_end = 2.0\nsample_every = 40\n",
    );
    run_ok(
        bin()
            .args(["master", "--deterministic", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join("out")),
    );
    let text = std::fs::read_to_string(dir.join("out").join("master_timeseries.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(2) {
        for cell in line.split(',') {
            let value: f64 = cell.parse().unwrap();
            assert_eq!(format!("{value}"), cell, "float cell must round-trip");
        }
        rows += 1;
    }
    assert!(rows > 10);
}

#[test]
fn spectrum_headline_row() {
    let dir = tmp_dir("spectrum");
    let cfg = write_cfg(&dir, "run.cfg", "[system]\nn_emitters = 3\n");
    run_ok(
        bin()
            .args(["spectrum", "--deterministic", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join("out")),
    );
    let text = std::fs::read_to_string(dir.join("out").join("spectrum.csv")).unwrap();
    // the fully excited mode decays at n gamma_1d / 2 = 1.5
    let row = text
        .lines()
        .find(|l| l.starts_with("3,"))
        .expect("m = 3 row present");
    let decay: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((decay - 1.5).abs() < 1e-9, "row: {row}");
}

#[test]
fn reproduce_fig2_emits_bundle_summary() {
    let dir = tmp_dir("fig2");
    run_ok(
        bin()
            .args([
                "reproduce",
                "fig2",
                "--trajectories",
                "60",
                "--deterministic",
                "--seed",
                "3",
            ])
            .arg("--out")
            .arg(dir.join("out")),
    );
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("out").join("fig2").join("summary.json")).unwrap(),
    )
    .unwrap();
    let cases = summary["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 3);
    for (i, case) in cases.iter().enumerate() {
        let n = i + 1;
        assert_eq!(case["n_pumped"], n);
        let p = case["bundle_probability"].as_f64().unwrap();
        assert!(p > 0.6, "n = {n} bundle probability {p} suspiciously low");
        let fid = case["pump_fidelity"].as_f64().unwrap();
        assert!(fid > 0.9);
    }
    for n in 1..=3 {
        let svg = std::fs::read_to_string(
            dir.join("out")
                .join("fig2")
                .join(format!("distribution_n{n}.svg")),
        )
        .unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(
            !svg.contains("generated by"),
            "--deterministic must strip stamps"
        );
        assert!(dir
            .join("out")
            .join("fig2")
            .join(format!("populations_n{n}.csv"))
            .exists());
    }
}

#[test]
fn reproduce_fig4_emits_raster_and_g2() {
    let dir = tmp_dir("fig4");
    run_ok(
        bin()
            .args([
                "reproduce",
                "fig4",
                "--trajectories",
                "40",
                "--deterministic",
                "--seed",
                "5",
            ])
            .arg("--out")
            .arg(dir.join("out")),
    );
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("out").join("fig4").join("summary.json")).unwrap(),
    )
    .unwrap();
    for case in summary["cases"].as_array().unwrap() {
        assert_eq!(case["windows"], 9);
        let g0 = case["g2_zero"].as_f64().unwrap();
        assert!(g0 < 0.5, "g2(0) = {g0} should be strongly antibunched");
        let full = case["full_bundle_fraction"].as_f64().unwrap();
        assert!(full > 0.5);
    }
    let raster =
        std::fs::read_to_string(dir.join("out").join("fig4").join("raster_n3.csv")).unwrap();
    assert!(raster.lines().count() > 9 * 40);
    assert!(dir.join("out").join("fig4").join("g2_n2.svg").exists());
}

#[test]
fn reproduce_fig3_emits_interval_statistics() {
    let dir = tmp_dir("fig3");
    run_ok(
        bin()
            .args(["reproduce", "fig3", "--trajectories", "50", "--deterministic", "--seed", "2"])
            .arg("--out")
            .arg(dir.join("out")),
    );
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("out").join("fig3").join("summary.json")).unwrap(),
    )
    .unwrap();
    let stats = summary["interval_statistics"].as_array().unwrap();
    assert_eq!(stats.len(), 2); // n = 2 and n = 3 carry interval histograms
    for case in stats {
        assert!(case["bundle_events"].as_u64().unwrap() > 10);
    }
    assert!(dir.join("out").join("fig3").join("decay_comparison.svg").exists());
    assert!(dir.join("out").join("fig3").join("intensity.svg").exists());
    assert!(dir.join("out").join("fig3").join("intervals_n2.csv").exists());
}

#[test]
fn master_two_emitter_columns_cover_the_cascade() {
    let dir = tmp_dir("master2");
    let cfg = write_cfg(
        &dir,
        "run.cfg",
        "[system]\nn_emitters = 2\n[run]\nt_end = 2.0\nsample_every = 100\n",
    );
    run_ok(
        bin()
            .args(["master", "--deterministic", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join("out")),
    );
    let text = std::fs::read_to_string(dir.join("out").join("master_timeseries.csv")).unwrap();
    let header = text.lines().nth(1).unwrap();
    for column in ["all_e", "sym_1", "minus", "all_f", "ground"] {
        assert!(header.contains(column), "missing column {column} in {header}");
    }
}

#[test]
fn reproduce_rejects_unknown_figure() {
    let out = bin().args(["reproduce", "fig9"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_var_sets_output_directory() {
    let dir = tmp_dir("env");
    let cfg = write_cfg(&dir, "run.cfg", "[system]\nn_emitters = 1\n");
    run_ok(
        bin()
            .env("BUNDLE_SIM_OUT", dir.join("from-env"))
            .args(["spectrum", "--config"])
            .arg(&cfg),
    );
    assert!(dir.join("from-env").join("spectrum.csv").exists());
}
