//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vtriplet::check::{run_checks, CheckReport};
use vtriplet::eval::{
    confusion_matrix, embed_sequence, normalize_confusion, performance_curve, top1_accuracy, ConfusionMatrix,
    SelectionAxis,
};
use vtriplet::loss::triplet_cost;
use vtriplet::mining::load_manifest;
use vtriplet::network::{Network, NetworkSpec, ParameterSet};
use vtriplet::Tensor;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn descriptor_contract() -> Outcome {
    let spec = NetworkSpec::paper();
    let input = spec.input();
    let params = ParameterSet::<f32>::init(&spec, 0);
    let image = Tensor::filled(input.tensor_shape(), 0.25f32);
    let len = match Network::new(&spec, &params).and_then(|n| n.forward(&image)) {
        Ok(d) => d.len(),
        Err(e) => return outcome(false, e.to_string()),
    };
    let shape = (input.channels, input.height, input.width);
    outcome(shape == (3, 120, 160) && len == 128, format!("input {shape:?}, descriptor length {len}"))
}

fn loss_suite() -> Outcome {
    let h = [0.4f64, -1.5];
    let cases: [(&[f64], &[f64], &[f64], f64); 4] = [
        (&h, &h, &h, 1.0),
        (&[0.0, 0.0], &[0.0, 0.0], &[3.0, 0.0], 0.0),
        (&[0.0, 0.0], &[1.0, 0.0], &[1.5, 0.0], 0.25),
        // boundary dn = margin + dp
        (&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], 0.0),
    ];
    let mut worst = 0.0f64;
    let mut boundary_exact = true;
    for (i, (a, b, c, want)) in cases.iter().enumerate() {
        match triplet_cost(a, b, c, 1.0) {
            Ok(got) => {
                worst = worst.max((got - want).abs());
                if i == 3 && got != 0.0 {
                    boundary_exact = false;
                }
            }
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    outcome(worst <= 1e-7 && boundary_exact, format!("max error {worst:.1e}"))
}

fn summarize(reports: &[&CheckReport]) -> String {
    reports
        .iter()
        .map(|r| format!("{} {:.1e}", r.name, r.metric))
        .collect::<Vec<_>>()
        .join("; ")
}

fn gradient_suite(reports: &[CheckReport]) -> Outcome {
    let grads: Vec<&CheckReport> = reports.iter().filter(|r| r.name.contains("vs FD")).collect();
    let elapsed: Duration = grads.iter().map(|r| r.elapsed).sum();
    let ok = grads.len() == 7 && grads.iter().all(|r| r.passed) && elapsed < Duration::from_secs(60);
    outcome(ok, format!("{:.2}s; {}", elapsed.as_secs_f64(), summarize(&grads)))
}

fn oracle_suite(reports: &[CheckReport]) -> Outcome {
    let oracles: Vec<&CheckReport> = reports
        .iter()
        .filter(|r| r.name.contains("direct loops") || r.name.contains("full sort") || r.name.contains("pairwise"))
        .collect();
    outcome(oracles.len() == 3 && oracles.iter().all(|r| r.passed), summarize(&oracles))
}

fn random_matrix(rng: &mut ChaCha8Rng) -> ConfusionMatrix {
    let (r, c) = (rng.gen_range(1..25), rng.gen_range(1..25));
    // a coarse grid of values makes ties common
    let data = (0..r * c).map(|_| rng.gen_range(0..40) as f64 * 0.25).collect();
    ConfusionMatrix::from_vec(r, c, data).unwrap()
}

fn argmins(m: &ConfusionMatrix) -> Vec<usize> {
    (0..m.cols())
        .map(|j| {
            (0..m.rows())
                .min_by(|&a, &b| m.get(a, j).total_cmp(&m.get(b, j)).then(a.cmp(&b)))
                .unwrap()
        })
        .collect()
}

fn normalization_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tested = 0;
    for _ in 0..500 {
        let m = random_matrix(&mut rng);
        if m.max() == 0.0 {
            continue;
        }
        let n = match normalize_confusion(&m) {
            Ok(n) => n,
            Err(e) => return outcome(false, e.to_string()),
        };
        if n.max() != 1.0 || argmins(&n) != argmins(&m) {
            return outcome(false, format!("failed on a {}x{} matrix", m.rows(), m.cols()));
        }
        tested += 1;
    }
    let example = ConfusionMatrix::from_rows(&[vec![2.0, 4.0], vec![1.0, 8.0]]).unwrap();
    let n = normalize_confusion(&example).unwrap();
    let exact = n.data() == [0.25, 0.5, 0.125, 1.0];
    outcome(exact, format!("{tested} random matrices, [[2,4],[1,8]] -> {:?}", n.data()))
}

fn curve_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..500 {
        let m = random_matrix(&mut rng);
        let k = rng.gen_range(1..=m.rows());
        let d_max = m.rows().max(m.cols()) - 1;
        let c = match performance_curve(&m, k, d_max, SelectionAxis::PerQuery) {
            Ok(c) => c,
            Err(e) => return outcome(false, e.to_string()),
        };
        let monotone = c.points.windows(2).all(|w| w[0].1 <= w[1].1);
        if !monotone || c.terminal() != Some(1.0) {
            return outcome(false, format!("bad curve for a {}x{} matrix, k={k}", m.rows(), m.cols()));
        }
    }
    for n in 1..=30 {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 + rng.gen::<f64>() }).collect())
            .collect();
        let m = ConfusionMatrix::from_rows(&rows).unwrap();
        let c = performance_curve(&m, 1, n - 1, SelectionAxis::PerQuery).unwrap();
        if !c.points.iter().all(|p| p.1 == 1.0) {
            return outcome(false, format!("perfect diagonal n={n} not flat"));
        }
    }
    outcome(true, "500 random curves, 30 perfect diagonals")
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_pipeline(out: &Path) -> Result<(Duration, Vec<(String, f64)>), String> {
    let config = workspace_root().join("configs/tiny.toml");
    let start = Instant::now();
    let mut top1 = Vec::new();
    for cmd in ["synth", "mine", "train", "embed", "eval"] {
        let o = Command::new(env!("CARGO_BIN_EXE_vtriplet"))
            .arg("--config")
            .arg(&config)
            .args(["--deterministic", "--seed", "42", cmd])
            .env("VTRIPLET_OUT", out)
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{cmd}: {}", String::from_utf8_lossy(&o.stderr).trim()));
        }
        if cmd == "eval" {
            for line in String::from_utf8_lossy(&o.stdout).lines() {
                // "eval: <query> vs <db>: top1 <value>, ..."
                let seq = line.strip_prefix("eval: ").and_then(|r| r.split(' ').next());
                let value = line.split("top1 ").nth(1).and_then(|r| r.split(',').next());
                if let (Some(s), Some(v)) = (seq, value.and_then(|v| v.parse().ok())) {
                    top1.push((s.to_string(), v));
                }
            }
        }
    }
    Ok((start.elapsed(), top1))
}

fn log_costs(out: &Path) -> Result<(f64, f64), String> {
    let text = fs::read_to_string(out.join("train_log.csv")).map_err(|e| e.to_string())?;
    let costs: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("iteration"))
        .filter_map(|l| l.split(',').nth(1).and_then(|v| v.parse().ok()))
        .collect();
    match (costs.first(), costs.last()) {
        (Some(&a), Some(&b)) => Ok((a, b)),
        _ => Err("empty training log".into()),
    }
}

fn initial_top1(out: &Path) -> Result<Vec<f64>, String> {
    let spec = NetworkSpec::tiny();
    let params = ParameterSet::init(&spec, 42);
    let embed = |name: &str| {
        let m = load_manifest(&out.join(name), true)?;
        embed_sequence(&m, &spec, &params, 64)
    };
    let db = embed("synth-c0.csv").map_err(|e| e.to_string())?;
    ["synth-c1.csv", "synth-c2.csv"]
        .iter()
        .map(|q| {
            let q = embed(q)?;
            top1_accuracy(&confusion_matrix(&db, &q)?)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())
}

fn desk_experiment(out: &Path) -> Outcome {
    let (elapsed, trained) = match run_pipeline(out) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let (first, last) = match log_costs(out) {
        Ok(c) => c,
        Err(e) => return outcome(false, e),
    };
    let init = match initial_top1(out) {
        Ok(v) => v,
        Err(e) => return outcome(false, e),
    };
    let cost_ok = last <= 0.5 * first;
    let trained_ok = trained.len() == 2 && trained.iter().all(|(_, t)| *t >= 0.80);
    let init_ok = init.iter().all(|&t| t <= 0.20);
    let time_ok = elapsed < Duration::from_secs(600);
    let trained_txt: Vec<String> = trained.iter().map(|(s, t)| format!("{s} {t:.2}")).collect();
    outcome(
        cost_ok && trained_ok && init_ok && time_ok,
        format!(
            "cost {first:.4} -> {last:.4}; trained top1 {}; init top1 {:.2}/{:.2}; {:.0}s",
            trained_txt.join(", "),
            init[0],
            init[1],
            elapsed.as_secs_f64()
        ),
    )
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    if let Err(e) = run_pipeline(second) {
        return outcome(false, e);
    }
    let mut files = vec![PathBuf::from("params.bin")];
    match fs::read_dir(first.join("descriptors")) {
        Ok(dir) => files.extend(
            dir.flatten()
                .map(|e| PathBuf::from("descriptors").join(e.file_name()))
                .filter(|p| p.extension().is_some_and(|x| x == "vds")),
        ),
        Err(e) => return outcome(false, e.to_string()),
    }
    for f in &files {
        if fs::read(first.join(f)).ok() != fs::read(second.join(f)).ok() {
            return outcome(false, format!("{} differs", f.display()));
        }
    }
    outcome(files.len() == 4, format!("{} files byte-identical", files.len()))
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let (a, b) = (dir.path().join("run-a"), dir.path().join("run-b"));
    let reports = run_checks(42);

    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("descriptor contract", Box::new(descriptor_contract)),
        ("triplet cost examples", Box::new(loss_suite)),
        ("gradient suite", Box::new(|| gradient_suite(&reports))),
        ("oracle equivalence", Box::new(|| oracle_suite(&reports))),
        ("confusion normalization", Box::new(normalization_suite)),
        ("curve properties", Box::new(curve_suite)),
        ("desk-scale learning experiment", Box::new(|| desk_experiment(&a))),
        ("pipeline determinism", Box::new(|| determinism(&a, &b))),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
