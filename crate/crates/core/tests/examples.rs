//! Runs the example programs that `cargo test` builds alongside the tests.

use std::path::PathBuf;
use std::process::Command;

/// Completes in seconds; `four_mode` is left to manual runs.
const QUICK: [&str; 7] = [
    "takagi",
    "forward_spectrum",
    "layer_strip",
    "ambiguity",
    "windowed_h0",
    "grating_profile",
    "config_roundtrip",
];

fn examples_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().join("examples")
}

#[test]
fn quick_examples_run() {
    let dir = examples_dir();
    if !dir.join(QUICK[0]).with_extension(std::env::consts::EXE_EXTENSION).exists() {
        // only built by a full `cargo test`; build them when run in isolation
        let status = Command::new(env!("CARGO"))
            .args(["build", "--examples", "--manifest-path", concat!(env!("CARGO_MANIFEST_DIR"), "/Cargo.toml")])
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in QUICK {
        let path = dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX));
        assert!(path.exists(), "example binary {} not built", path.display());
        let out = Command::new(&path).output().unwrap();
        assert!(
            out.status.success(),
            "{name} failed:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out.stdout.is_empty(), "{name} printed nothing");
    }
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_multistrip");
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");

    let ok = Command::new(bin)
        .args(["roundtrip", "--example", "single-layer", "--out-dir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("rho"));

    let check = Command::new(bin)
        .args(["check", "--spectrum"])
        .arg(out_dir.join("forward/spectrum.csv"))
        .arg("--transmission")
        .arg(out_dir.join("forward/transmission.csv"))
        .output()
        .unwrap();
    assert!(check.status.success());

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1,\n \"structure\": 3}").unwrap();
    let cfg_err = Command::new(bin)
        .args(["simulate", "--config"])
        .arg(&bad)
        .arg("--out-dir")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(cfg_err.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&cfg_err.stderr).contains("line 2"));

    let missing = Command::new(bin)
        .args(["invert", "--example", "single-layer", "--spectrum", "/nonexistent.csv", "--out-dir"])
        .arg(dir.path().join("y"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(3));
}
