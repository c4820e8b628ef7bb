//! End-to-end checks of the command-line interface: file round trips,
//! determinism, validation failures and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lunadop"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("lunadop-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn simulate_then_solve_closes_the_loop_noiselessly() {
    let dir = tmp("round-trip");
    let config = dir.join("scenario.toml");
    std::fs::write(
        &config,
        "[scenario]\nephemeris = \"perfect\"\n[errors]\nephemeris = false\nsatellite_clock = false\nreceiver_clock = false\ncarrier_tracking = false\n",
    )
    .unwrap();

    let sim = dir.join("sim");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--seed", "42", "--passes", "1", "--out"])
        .arg(&sim)
        .status()
        .unwrap();
    assert!(status.success());

    let sol_dir = dir.join("sol");
    let status = bin()
        .args(["solve", "--ephemeris-file"])
        .arg(sim.join("ephemeris.json"))
        .arg("--observations")
        .arg(sim.join("observations.csv"))
        .args(["--config"])
        .arg(&config)
        .arg("--out")
        .arg(&sol_dir)
        .status()
        .unwrap();
    assert!(status.success());

    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&sim.join("manifest.json"))).unwrap();
    let solution: serde_json::Value =
        serde_json::from_slice(&read(&sol_dir.join("solution.json"))).unwrap();
    let truth: Vec<f64> = manifest["receiver_true_km"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let pos: Vec<f64> = solution["position_km"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let err_m =
        truth.iter().zip(&pos).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() * 1e3;
    assert!(err_m < 1.0, "noiseless round-trip error {err_m} m");
    assert_eq!(solution["schema"], "lunadop/solution/v1");
}

#[test]
fn identical_config_and_seed_produce_byte_identical_outputs() {
    let dir = tmp("determinism");
    for run in ["a", "b"] {
        let status = bin()
            .args(["simulate", "--seed", "9", "--passes", "1", "--out"])
            .arg(dir.join(run))
            .status()
            .unwrap();
        assert!(status.success());
    }
    for file in ["ephemeris.json", "observations.csv", "manifest.json"] {
        assert_eq!(
            read(&dir.join("a").join(file)),
            read(&dir.join("b").join(file)),
            "{file} differs between identical runs"
        );
    }
    // A different seed must change the observations.
    let status = bin()
        .args(["simulate", "--seed", "10", "--passes", "1", "--out"])
        .arg(dir.join("c"))
        .status()
        .unwrap();
    assert!(status.success());
    assert_ne!(read(&dir.join("a").join("observations.csv")), read(&dir.join("c").join("observations.csv")));
}

#[test]
fn raising_the_mask_reduces_observation_count() {
    let dir = tmp("mask");
    let low = dir.join("low.toml");
    let high = dir.join("high.toml");
    std::fs::write(&low, "[scenario]\nmask_deg = 5.0\n").unwrap();
    std::fs::write(&high, "[scenario]\nmask_deg = 30.0\n").unwrap();
    let count = |config: &Path, out: &Path| -> usize {
        let status = bin()
            .args(["simulate", "--config"])
            .arg(config)
            .args(["--seed", "3", "--passes", "1", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
        String::from_utf8(read(&out.join("observations.csv")))
            .unwrap()
            .lines()
            .skip(2)
            .filter(|l| !l.trim().is_empty())
            .count()
    };
    let n_low = count(&low, &dir.join("low"));
    let n_high = count(&high, &dir.join("high"));
    assert!(n_high < n_low, "mask 30 deg gave {n_high} obs vs {n_low} at 5 deg");
    // A default single pass is roughly 12 minutes at 1 Hz.
    assert!((400..=1000).contains(&n_low), "pass length {n_low}");
}

#[test]
fn malformed_csv_row_fails_with_line_number_and_exit_one() {
    let dir = tmp("malformed");
    let sim = dir.join("sim");
    assert!(bin()
        .args(["simulate", "--seed", "4", "--passes", "1", "--out"])
        .arg(&sim)
        .status()
        .unwrap()
        .success());
    // Corrupt one row.
    let obs_path = sim.join("observations.csv");
    let mut text = String::from_utf8(read(&obs_path)).unwrap();
    text.push_str("99.0,banana,80.0,6e-5,0\n");
    std::fs::write(&obs_path, text).unwrap();
    let bad_line = String::from_utf8(read(&obs_path)).unwrap().lines().count();

    let output = bin()
        .args(["solve", "--ephemeris-file"])
        .arg(sim.join("ephemeris.json"))
        .arg("--observations")
        .arg(&obs_path)
        .arg("--out")
        .arg(dir.join("sol"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains(&format!(":{bad_line}:")), "stderr: {stderr}");
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tmp("badconfig");
    let config = dir.join("scenario.toml");
    std::fs::write(&config, "[scenario]\nseeed = 3\n").unwrap();
    let output = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("seeed"));
}

#[test]
fn unknown_ephemeris_method_exits_one() {
    let output = bin()
        .args(["simulate", "--ephemeris", "method9", "--out"])
        .arg(tmp("badmethod").join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn montecarlo_writes_results_and_summary() {
    let dir = tmp("mc");
    let status = bin()
        .args(["montecarlo", "--seed", "6", "--trials", "3", "--passes", "1", "--ephemeris", "perfect", "--out"])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let results = String::from_utf8(read(&dir.join("results.csv"))).unwrap();
    assert!(results.starts_with("# lunadop/results/v1\n"));
    assert_eq!(results.lines().count(), 2 + 3);
    let summary: serde_json::Value = serde_json::from_slice(&read(&dir.join("summary.json"))).unwrap();
    assert_eq!(summary["schema"], "lunadop/summary/v1");
    assert_eq!(summary["n_trials"], 3);
    assert!(summary["scenario_hash"].as_str().unwrap().len() == 16);
}

#[test]
fn gdop_grid_has_expected_cells() {
    let dir = tmp("gdop");
    let status = bin()
        .args(["gdop", "--passes", "2", "--out"])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let text = String::from_utf8(read(&dir.join("gdop.csv"))).unwrap();
    assert!(text.starts_with("# lunadop/gdop/v1\nlat_deg,lon_deg,gdop\n"));
    let rows: Vec<&str> = text.lines().skip(2).filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(rows.len(), 20 * 72);
    // The pole ring sees every pass: finite values at lat 89.5.
    let finite_pole = rows
        .iter()
        .filter(|r| r.starts_with("89.5,"))
        .all(|r| r.split(',').nth(2).unwrap().parse::<f64>().is_ok());
    assert!(finite_pole);
}
