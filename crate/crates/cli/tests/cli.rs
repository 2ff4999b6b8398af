use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ebm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ebm(args);
    assert!(
        out.status.success(),
        "ebm {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SMALL: [&str; 10] = [
    "--set",
    "trainer.steps=40",
    "--set",
    "trainer.batch_pos=20",
    "--set",
    "trainer.batch_neg=20",
    "--set",
    "sampler.steps=10",
    "--set",
    "trainer.checkpoint_every=20",
];

fn train_toy(out: &Path, seed: &str) {
    let mut args = vec!["train", "--preset", "toy-nonconv", "--seed", seed, "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    ok(&args);
}

#[test]
fn training_is_reproducible_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train_toy(&a, "7");
    train_toy(&b, "7");
    let log = fs::read(a.join("diagnostics.csv")).unwrap();
    assert_eq!(log, fs::read(b.join("diagnostics.csv")).unwrap());
    let text = String::from_utf8(log).unwrap();
    assert_eq!(text.lines().count(), 41);
    assert!(text.starts_with("t,d,v,r,"));
    for f in [
        "config.txt",
        "model.ckpt",
        "checkpoints/step_000020.ckpt",
        "checkpoints/step_000040.ckpt",
        "samples/step_000040.csv",
        "samples/step_000040_energy.csv",
        "energy_gap.svg",
        "series_stats.csv",
        "ccf_dv.svg",
    ] {
        assert!(a.join(f).exists(), "missing {f}");
    }

    let c = dir.path().join("c");
    train_toy(&c, "8");
    assert_ne!(fs::read(a.join("diagnostics.csv")).unwrap(), fs::read(c.join("diagnostics.csv")).unwrap());
}

#[test]
fn snapshot_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    train_toy(&a, "3");
    let b = dir.path().join("b");
    let cfg = a.join("config.txt");
    ok(&["train", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(
        fs::read(a.join("diagnostics.csv")).unwrap(),
        fs::read(b.join("diagnostics.csv")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(a.join("config.txt")).unwrap().replace(a.to_str().unwrap(), "OUT"),
        fs::read_to_string(b.join("config.txt")).unwrap().replace(b.to_str().unwrap(), "OUT")
    );
}

#[test]
fn errors_are_one_classified_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let r = ebm(&["train", "--preset", "toy-conv", "--out", out, "--set", "sampler.epsilon=-1"]);
    assert!(!r.status.success());
    let err = String::from_utf8(r.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[config]: "), "{err}");

    let r = ebm(&["train", "--preset", "nope", "--out", out]);
    assert!(String::from_utf8(r.stderr).unwrap().starts_with("error[config]: "));

    let r = ebm(&["sample", "--out", out, "--set", "model.checkpoint=/does/not/exist.ckpt"]);
    assert!(!r.status.success());
    assert!(String::from_utf8(r.stderr).unwrap().starts_with("error[io]: "));
}

#[test]
fn sample_and_audit_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    train_toy(&run, "1");
    let ckpt = format!("model.checkpoint={}", run.join("model.ckpt").display());

    let s = dir.path().join("s");
    let set = ["--set", &ckpt, "--set", "data.source=toy", "--set", "sample.count=16"];
    let mut args = vec!["sample", "--preset", "toy-nonconv", "--out", s.to_str().unwrap()];
    args.extend(set);
    ok(&args);
    let energies = fs::read_to_string(s.join("samples_energy.csv")).unwrap();
    assert_eq!(energies.lines().count(), 17);
    assert!(s.join("samples.csv").exists());

    let a = dir.path().join("a");
    let out = ok(&[
        "audit",
        "--preset",
        "toy-nonconv",
        "--out",
        a.to_str().unwrap(),
        "--set",
        &ckpt,
        "--set",
        "audit.steps=200",
        "--set",
        "audit.chains=4",
        "--set",
        "audit.reference_samples=100",
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("verdict: "), "{stdout}");
    let report = fs::read_to_string(a.join("audit.txt")).unwrap();
    assert!(report.lines().next().unwrap().starts_with("verdict="));
    assert!(a.join("audit_trajectory.csv").exists());
    assert!(a.join("audit_data_init.csv").exists());
}

#[test]
fn toy_command_compares_densities() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy");
    let mut args = vec!["toy", "--preset", "toy-nonconv", "--out", out.to_str().unwrap(), "--set", "toy.resolution=40"];
    args.extend(SMALL);
    ok(&args);
    let l1 = fs::read_to_string(out.join("toy_l1.txt")).unwrap();
    assert!(l1.contains("l1_learned_truth="));
    assert_eq!(l1.lines().filter(|l| l.starts_with("mode")).count(), 3);
    for f in ["truth.svg", "learned.csv", "kde.svg"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn map_finds_the_two_wells() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("map");
    let report = dir.path().join("audit.txt");
    fs::write(&report, "verdict=non-convergent\n").unwrap();
    let r = ok(&[
        "map",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "model.potential=double-well",
        "--set",
        "data.source=none",
        "--set",
        "map.starts=20",
        "--set",
        &format!("map.audit_report={}", report.display()),
    ]);
    assert!(String::from_utf8(r.stderr).unwrap().contains("non-convergent"));
    let text = fs::read_to_string(out.join("landscape.txt")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("basin ")).count(), 2, "{text}");
    assert!(out.join("disconnectivity.svg").exists());
}

#[test]
fn image_training_writes_sample_grids() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("img");
    ok(&[
        "train",
        "--preset",
        "image-nonconv",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "trainer.steps=2",
        "--set",
        "trainer.batch_pos=4",
        "--set",
        "trainer.batch_neg=4",
        "--set",
        "sampler.steps=3",
        "--set",
        "data.count=20",
        "--set",
        "data.size=16",
        "--set",
        "trainer.checkpoint_every=2",
    ]);
    assert!(out.join("samples/step_000002.png").exists());
    let e = fs::read_to_string(out.join("samples/step_000002_energy.csv")).unwrap();
    assert_eq!(e.lines().count(), 5);
}
