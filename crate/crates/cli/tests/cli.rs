//! The binary exercised through its public command-line surface.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wellshake"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wellshake-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &PathBuf, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const PREP: &str = r#"{
  "protocol": { "kind": "prepare", "target": { "state": "fock", "n": 1 }, "t_over_2pi": 1.0 },
  "units": { "alpha": 0.25 },
  "grid": { "n_points": 128, "half_width": 10.0 },
  "optimizer": { "budget_evals": 40, "max_dressings": 2 },
  "seed": 3
}"#;

#[test]
fn dry_run_validates_and_prints_resolved_config() {
    let dir = scratch("dry");
    let cfg = write_config(&dir, "prep.json", PREP);
    let out = bin()
        .args(["prepare", "--config", cfg.to_str().unwrap(), "--dry-run"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("\"n_harmonics_u\": 12"), "resolved defaults missing: {text}");
    // nothing was computed
    assert!(!dir.join("manifest.json").exists());
}

#[test]
fn unknown_keys_fail_with_location() {
    let dir = scratch("unknown");
    let cfg = write_config(
        &dir,
        "bad.json",
        r#"{ "units": { "alpha": 0.25 }, "grdi": { "n_points": 128 } }"#,
    );
    let out = bin()
        .args(["spectrum", "--config", cfg.to_str().unwrap(), "--dry-run"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line"), "no location in: {err}");
}

#[test]
fn command_rejects_foreign_protocol_kinds() {
    let dir = scratch("kind");
    let cfg = write_config(&dir, "prep.json", PREP);
    let out = bin()
        .args(["gate", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cannot run protocol kind"), "{err}");
}

#[test]
fn prepare_writes_artifacts_and_replay_passes() {
    let dir = scratch("run");
    let cfg = write_config(&dir, "prep.json", PREP);
    let run_dir = dir.join("out");
    let out = bin()
        .args([
            "prepare",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            run_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for artifact in ["manifest.json", "controls.csv", "trajectory.csv", "density.csv"] {
        assert!(run_dir.join(artifact).exists(), "missing {artifact}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 3);
    assert!(manifest["metrics"]["fidelity"].as_f64().is_some());
    assert!(manifest["error"].is_null());

    let replay = bin()
        .args(["replay", "--run", run_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stdout));
    assert!(String::from_utf8_lossy(&replay.stdout).contains("OK"));
}

#[test]
fn serial_runs_are_bit_stable() {
    let dir = scratch("serial");
    let cfg = write_config(&dir, "prep.json", PREP);
    let run = |tag: &str| {
        let out_dir = dir.join(tag);
        let out = bin()
            .args([
                "prepare",
                "--config",
                cfg.to_str().unwrap(),
                "--serial",
                "--out",
                out_dir.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        let manifest: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out_dir.join("manifest.json")).unwrap(),
        )
        .unwrap();
        manifest["metrics"].clone()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn spectrum_emits_energies_csv() {
    let dir = scratch("spectrum");
    let cfg = write_config(
        &dir,
        "spec.json",
        r#"{ "units": { "alpha": 0.2 }, "grid": { "n_points": 256 }, "n_states": 4 }"#,
    );
    let out_dir = dir.join("out");
    let out = bin()
        .args([
            "spectrum",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("n,energy"));
    assert!(csv.lines().count() >= 5);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("splitting"));
}

#[test]
fn validation_errors_surface_before_compute() {
    let dir = scratch("invalid");
    let cfg = write_config(
        &dir,
        "bad.json",
        r#"{
            "protocol": { "kind": "prepare", "target": { "state": "fock", "n": 1 }, "t_over_2pi": 6.0 },
            "units": { "alpha": 0.25 },
            "noise": { "gamma1": -1.0 }
        }"#,
    );
    let out = bin()
        .args(["prepare", "--config", cfg.to_str().unwrap(), "--dry-run"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = scratch("seed");
    let cfg = write_config(&dir, "prep.json", PREP);
    let out_dir = dir.join("out");
    let out = bin()
        .args([
            "prepare",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "99",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["seed"], 99);
}
