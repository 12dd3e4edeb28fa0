use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fedtrans::config::Mode;
use fedtrans::diagnostics::read_cloud_csv;
use fedtrans::experiment::{read_comparison, read_metrics, read_summary};
use fedtrans::federation::Direction;

const TINY: &str = "\
dataset=synthetic n_samples=30 image_size=16
gen_channels=4,8 disc_channels=4
scheme=gradual n_clients=2
rounds=2 local_epochs=1 batch_size=4
";

fn fedtrans(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedtrans"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.conf");
    fs::write(&path, format!("{TINY}{extra}\n")).unwrap();
    path.to_string_lossy().into_owned()
}

fn run_ok(args: &[&str]) -> Output {
    let out = fedtrans(args);
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "mode=fed_dp rounds=5");
    run_ok(&["run", &cfg, "--out", out.to_str().unwrap()]);

    let metrics = read_metrics(&out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.len(), 10);
    assert_eq!(metrics[0].direction, Direction::AtoB);
    assert_eq!(metrics[9].round, 5);
    let header = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(header.starts_with("round_or_epoch,direction,mae,psnr,ssim\n"));

    for r in 1..=5 {
        let cloud = read_cloud_csv(&out.join(format!("latent_round_{r}.csv"))).unwrap();
        assert_eq!(cloud.len(), 4 * 6, "30 samples hold out 6 for testing");
        assert!(out.join(format!("checkpoints/gen_ab_{r}.params")).is_file());
        assert!(out.join(format!("checkpoints/gen_ba_{r}.params")).is_file());
    }
    assert_eq!(read_summary(&out.join("summary.csv")).unwrap().len(), 5);
    let manifest = fedtrans::data::read_manifest(&out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.len(), 24);
    let ckpt =
        fedtrans::checkpoint::read_checkpoint(&out.join("checkpoints/gen_ab_5.params")).unwrap();
    assert_eq!(ckpt.layout()[0].name, "enc0.weight");
}

#[test]
fn same_seed_gives_identical_metrics_and_seed_override_changes_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let read = |name: &str| fs::read(dir.path().join(name).join("metrics.csv")).unwrap();
    run_ok(&["run", &cfg, "--out", dir.path().join("a").to_str().unwrap()]);
    run_ok(&["run", &cfg, "--out", dir.path().join("b").to_str().unwrap()]);
    run_ok(&[
        "run",
        &cfg,
        "--seed",
        "7",
        "--out",
        dir.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn every_mode_completes_with_latent_clouds() {
    let dir = tempfile::tempdir().unwrap();
    for mode in Mode::ALL {
        let cfg = write_config(
            dir.path(),
            &format!("mode={mode} epochs=2 checkpoints=false"),
        );
        let out = dir.path().join(mode.to_string());
        run_ok(&["run", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(
            read_metrics(&out.join("metrics.csv")).unwrap().len(),
            4,
            "{mode}"
        );
        let cloud = read_cloud_csv(&out.join("latent_round_2.csv")).unwrap();
        assert!(cloud.iter().all(|p| p.x.is_finite() && p.y.is_finite()));
        assert!(!out.join("checkpoints").exists());
    }
}

#[test]
fn compare_writes_two_rows_per_direction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("cmp");
    run_ok(&["compare", &cfg, "--out", out.to_str().unwrap()]);
    let rows = read_comparison(&out.join("comparison.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    for d in Direction::BOTH {
        let modes: Vec<Mode> = rows
            .iter()
            .filter(|r| r.direction == d)
            .map(|r| r.mode)
            .collect();
        assert_eq!(modes, [Mode::Central, Mode::FedDp]);
    }
    assert!(rows
        .iter()
        .all(|r| r.mae.is_finite() && r.psnr.is_finite() && r.ssim.is_finite()));
    // central gets rounds × local_epochs = 2 epochs
    assert_eq!(
        read_metrics(&out.join("central/metrics.csv"))
            .unwrap()
            .len(),
        4
    );
}

#[test]
fn config_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.conf");
    assert_eq!(
        fedtrans(&["run", missing.to_str().unwrap()]).status.code(),
        Some(1)
    );

    for (extra, key) in [
        ("paired_ratio=1.5", "paired_ratio"),
        ("colour=blue", "colour"),
        ("rounds=x", "rounds"),
    ] {
        let cfg = write_config(dir.path(), extra);
        let out = fedtrans(&["run", &cfg]);
        assert_eq!(out.status.code(), Some(1), "{extra}");
        assert!(
            String::from_utf8_lossy(&out.stderr).contains(key),
            "{extra}"
        );
    }
    assert_eq!(fedtrans(&["launch"]).status.code(), Some(1));
    assert_eq!(fedtrans(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mode=fed lr_g=1e200");
    let out = fedtrans(&[
        "run",
        &cfg,
        "--out",
        dir.path().join("boom").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("round"), "{stderr}");

    let empty = dir.path().join("images");
    fs::create_dir(&empty).unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("dataset=image_dir image_dir={}", empty.display()),
    );
    assert_eq!(
        fedtrans(&["run", &cfg, "--out", dir.path().join("e").to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}
