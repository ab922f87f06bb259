use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 42

[network]
preset = "tiny"

[synth]
places = 12
conditions = 2

[[mining.sources]]
kind = "cross-condition"
manifests = ["synth-c0.csv", "synth-c1.csv"]

[training]
batch_size = 6
iterations = 15
log_interval = 5

[evaluation]
database = "synth-c0.csv"
queries = ["synth-c1.csv"]
k = [1, 3]
"#;

fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    fs::write(&p, SMALL).unwrap();
    p
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtriplet"))
        .arg("--config")
        .arg(config)
        .env("VTRIPLET_OUT", out)
        .args(args)
        .output()
        .unwrap()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn pipeline(config: &Path, out: &Path, extra: &[&str]) {
    for cmd in ["synth", "mine", "train", "embed", "eval"] {
        let mut args = vec![cmd];
        args.extend_from_slice(extra);
        ok(run(config, out, &args));
    }
}

#[test]
fn full_pipeline_produces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    pipeline(&cfg, &out, &["--deterministic"]);

    for f in ["synth-c0.csv", "triplets.csv", "params.bin", "params.bin.prov", "train_log.csv", "descriptors/synth-c1.vds"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let curve = fs::read_to_string(out.join("eval/synth-c1/curve_k3.csv")).unwrap();
    assert!(curve.starts_with("# config_hash="));
    assert!(curve.lines().nth(1) == Some("d,ratio"));
    assert!(curve.trim_end().ends_with(",1"), "{curve}");
    let pgm = fs::read(out.join("eval/synth-c1/heatmap.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n# config_hash="));

    let triplets = fs::read_to_string(out.join("triplets.csv")).unwrap();
    assert_eq!(triplets.lines().filter(|l| !l.starts_with('#')).count(), 1 + 15 * 6);

    // --plot adds the svg
    ok(run(&cfg, &out, &["eval", "--plot"]));
    assert!(out.join("eval/synth-c1/curves.svg").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&cfg, &a, &["--deterministic", "--seed", "7"]);
    pipeline(&cfg, &b, &["--deterministic", "--seed", "7"]);
    for f in [
        "synth-c1.csv",
        "images/c1/p0003.png",
        "triplets.csv",
        "params.bin",
        "train_log.csv",
        "descriptors/synth-c0.vds",
        "descriptors/synth-c1.vds",
        "eval/synth-c1/confusion.csv",
        "eval/synth-c1/heatmap.pgm",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    // a different seed changes the mined triplets
    let c = dir.path().join("c");
    ok(run(&cfg, &c, &["synth", "--seed", "8"]));
    ok(run(&cfg, &c, &["mine", "--seed", "8"]));
    assert_ne!(fs::read(a.join("triplets.csv")).unwrap(), fs::read(c.join("triplets.csv")).unwrap());
}

#[test]
fn eval_without_params_is_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    ok(run(&cfg, &out, &["synth"]));
    let o = run(&cfg, &out, &["eval"]);
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.starts_with("error: missing-artifact:"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn mixed_provenance_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    for cmd in ["synth", "mine", "train"] {
        ok(run(&cfg, &out, &[cmd]));
    }
    ok(run(&cfg, &out, &["embed", "--seed", "99"]));
    let o = run(&cfg, &out, &["eval"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: mixed-provenance:"));
    ok(run(&cfg, &out, &["eval", "--force"]));
}

#[test]
fn usage_errors() {
    let o = Command::new(env!("CARGO_BIN_EXE_vtriplet")).arg("mine").output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: usage:"));

    let o = Command::new(env!("CARGO_BIN_EXE_vtriplet")).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = 1\n[nonsense]\n").unwrap();
    let o = run(&bad, dir.path(), &["synth"]);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: config:"));
}

#[test]
fn check_passes() {
    let o = Command::new(env!("CARGO_BIN_EXE_vtriplet")).args(["check", "--seed", "3"]).output().unwrap();
    let stdout = ok(o);
    assert!(stdout.lines().count() >= 8);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
}
