//! End-to-end checks of the command-line surface: output formats, file
//! artifacts and exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mimo-ident"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mimo-ident-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn schemes_list_prints_all_rows() {
    let out = bin().args(["schemes", "list"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["SingleAntenna", "AL", "QOSBC4", "FSTD", "SBC4_2", "OSBC3_1"] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
    assert_eq!(text.lines().count(), 18); // header + 17 schemes
}

#[test]
fn selftest_passes() {
    let out = bin().arg("selftest").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn gen_writes_readable_frame() {
    let dir = temp_dir("gen");
    let frame = dir.join("al.frame");
    let out = bin()
        .args(["gen", "--scheme", "AL", "--samples", "64", "--seed", "3"])
        .arg("--out")
        .arg(&frame)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(&frame).unwrap();
    assert_eq!(&bytes[..8], b"MIMOFRM1");
    // 32-byte header + 2 antennas x 64 slots x 16 bytes
    assert_eq!(bytes.len(), 32 + 2 * 64 * 16);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn features_emits_six_kinds() {
    let out = bin()
        .args(["features", "--scheme", "QOSBC4", "--samples", "64", "--snr", "15"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "kind,detector,mu,r,R");
    let kinds: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(kinds, ["alpha", "beta1", "beta2", "beta3", "gamma1", "gamma2"]);
}

#[test]
fn bad_config_file_exits_2() {
    let dir = temp_dir("badcfg");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "system = \"warp-drive\"\n").unwrap();
    let out = bin().arg("selftest").output().unwrap();
    assert!(out.status.success());
    let out = bin()
        .args(["features", "--scheme", "AL"])
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_models_is_a_config_error() {
    let out = bin()
        .args(["classify", "--simulate", "AL", "--model-dir", "/nonexistent-models"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_then_classify_and_sweep_roundtrip() {
    let dir = temp_dir("train");
    let models = dir.join("models");
    // Micro run: interface coverage, not accuracy.
    let out = bin()
        .args([
            "train",
            "--trials",
            "2",
            "--snr",
            "10",
            "--samples",
            "64",
            "--seed",
            "9",
            "--epochs",
            "3",
            "--no-training-profile",
            "--emit-data",
        ])
        .arg("--model-dir")
        .arg(&models)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["alpha.fnn", "beta.fnn", "gamma.fnn", "training_report.csv", "alpha_train.csv"] {
        assert!(models.join(name).exists(), "missing {name}");
    }

    let out = bin()
        .args(["classify", "--simulate", "QOSBC4", "--snr", "20", "--samples", "64", "--seed", "4"])
        .arg("--model-dir")
        .arg(&models)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "rank,scheme,n_t,distance");
    assert_eq!(text.lines().count(), 18);

    let csv = dir.join("sweep.csv");
    let out = bin()
        .args([
            "sweep",
            "--variable",
            "snr",
            "--values",
            "0,10",
            "--trials",
            "2",
            "--samples",
            "64",
            "--seed",
            "5",
        ])
        .arg("--model-dir")
        .arg(&models)
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# config:")));
    assert!(text.lines().any(|l| l.starts_with("# models:")));
    let header = text.lines().find(|l| l.starts_with("snr,")).unwrap();
    assert!(header.starts_with("snr,pr1,pr2,acc_SingleAntenna"));
    assert!(header.ends_with("seed,config_hash,wall_ms"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3); // header + 2 rows
    std::fs::remove_dir_all(&dir).unwrap();
}
