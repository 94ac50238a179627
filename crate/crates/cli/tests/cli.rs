//! End-to-end checks of the binary: config diagnostics, environment
//! overrides, attack runs, and the degenerate-input paths.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tcqkd"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("tcqkd-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn invalid_config_key_fails_with_diagnostic() {
    let dir = tmp("badkey");
    let cfg = dir.join("c.toml");
    std::fs::write(&cfg, "detector.dark_rate_hz = 55\n").unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dark_rate_hz"), "stderr: {err}");
}

#[test]
fn invalid_config_value_fails() {
    let dir = tmp("badval");
    let cfg = dir.join("c.toml");
    std::fs::write(&cfg, "detector.efficiency = 1.5\n").unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("efficiency"), "stderr: {err}");
}

#[test]
fn env_override_changes_the_run() {
    let dir = tmp("envvar");
    let cfg = dir.join("c.toml");
    std::fs::write(&cfg, "protocol.sequences = 3\n").unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .env("TCQKD_PROTOCOL__SEQUENCES", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let report = std::fs::read_to_string(dir.join("out/qber.json")).unwrap();
    assert!(report.contains("\"sequences\": 2"), "{report}");
}

#[test]
fn zero_mu_reports_null_qber() {
    let dir = tmp("zeromu");
    let cfg = dir.join("c.toml");
    std::fs::write(
        &cfg,
        "protocol.mean_photons_per_pulse = 0.0\nprotocol.sequences = 2\n",
    )
    .unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let report = std::fs::read_to_string(dir.join("out/qber.json")).unwrap();
    assert!(report.contains("\"qber\": null"), "{report}");
    assert!(report.contains("\"diagnostic\""), "{report}");
}

#[test]
fn max_coherence_attack_on_squares_gives_one_third_qber() {
    let dir = tmp("attack");
    let cfg = dir.join("c.toml");
    std::fs::write(
        &cfg,
        concat!(
            "protocol.sequences = 4\n",
            "profile.kind = \"square\"\n",
            "detector.dark_rate_per_s = 0\n",
            "detector.parasitic_rate_per_s = 0\n",
            "detector.jitter_ps = 0\n",
            "clock.relative_skew = 0\n",
            "attack.kind = \"max_coherence\"\n",
            "attack.intercept_fraction = 1.0\n",
            "attack.spread = 0.6667\n",
        ),
    )
    .unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--seed")
        .arg("5")
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("out/qber.json")).unwrap()).unwrap();
    let q = report["qber"].as_f64().unwrap();
    assert!((q - 1.0 / 3.0).abs() < 0.05, "q = {q}");
}

#[test]
fn coherence_rejects_single_sequence() {
    let dir = tmp("oneseq");
    let cfg = dir.join("c.toml");
    std::fs::write(&cfg, "protocol.sequences = 1\n").unwrap();
    let out = bin()
        .args(["coherence", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2"));
}

#[test]
fn ideal_squares_recover_half_coherence() {
    let dir = tmp("idealsq");
    let cfg = dir.join("c.toml");
    std::fs::write(
        &cfg,
        concat!(
            "protocol.sequences = 40\n",
            "profile.kind = \"square\"\n",
            "interferometer.intrinsic_visibility = 1.0\n",
            "detector.dark_rate_per_s = 0\n",
            "detector.parasitic_rate_per_s = 0\n",
        ),
    )
    .unwrap();
    let out = bin()
        .args(["coherence", "--config"])
        .arg(&cfg)
        .arg("--seed")
        .arg("3")
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("out/coherence.json")).unwrap())
            .unwrap();
    let gamma = report["gamma_0"].as_f64().unwrap();
    let sigma_t = report["sigma_t"].as_f64().unwrap();
    assert!(
        (gamma - 0.5).abs() < 3.0 * sigma_t,
        "gamma_0 = {gamma} +- {sigma_t}"
    );
}

#[test]
fn standard_coherence_run_matches_reference() {
    let dir = tmp("stdcoh");
    let out = bin()
        .args(["coherence", "--seed", "2026", "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("out/coherence.json")).unwrap())
            .unwrap();
    let gamma = report["gamma_0"].as_f64().unwrap();
    let sigma_t = report["sigma_t"].as_f64().unwrap();
    assert!(
        (gamma - 0.541).abs() < 3.0 * sigma_t,
        "gamma_0 = {gamma} vs 0.541 +- 3x{sigma_t}"
    );
}
