use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hemq::io::QuantizerFile;
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn hemq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hemq"))
        .args(args)
        .output()
        .expect("spawn hemq")
}

fn ok(args: &[&str]) -> Value {
    let out = hemq(args);
    assert!(
        out.status.success(),
        "hemq {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn recipe(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

/// `(iteration, loss)` rows of a trajectory file.
fn trajectory(dir: &Path) -> Vec<(usize, f64)> {
    let mut reader = csv::Reader::from_path(dir.join("trajectory.csv")).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["iteration", "loss", "wall_ms"]);
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn quantize_writes_all_outputs_and_the_quantizer_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let summary = ok(&[
        "quantize",
        "--config",
        &recipe("mixture-grid.toml"),
        "--iters",
        "50",
        "--out",
        out,
    ]);
    assert_eq!(summary["iterations"], 50);
    for name in ["config.json", "trajectory.csv", "quantizer.json", "metrics.json"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    let echo: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["command"], "quantize");
    assert_eq!(echo["config"]["iters"], 50);

    let text = fs::read_to_string(dir.path().join("quantizer.json")).unwrap();
    let file = QuantizerFile::read(dir.path().join("quantizer.json")).unwrap();
    assert_eq!(file.points.len(), 36);
    let again = QuantizerFile::from_measure(&file.to_measure().unwrap());
    let bits = |f: &QuantizerFile| {
        f.points
            .iter()
            .flatten()
            .chain(&f.weights)
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&file), bits(&again));
    assert_eq!(serde_json::to_string_pretty(&again).unwrap(), text);
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        ok(&[
            "quantize",
            "--config",
            &recipe("mixture-grid.toml"),
            "--iters",
            "100",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
    }
    let (ta, tb) = (trajectory(a.path()), trajectory(b.path()));
    assert_eq!(ta.len(), 100);
    assert_eq!(ta, tb);
    assert_eq!(
        fs::read(a.path().join("quantizer.json")).unwrap(),
        fs::read(b.path().join("quantizer.json")).unwrap()
    );
}

#[test]
fn flag_overrides_take_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "quantize",
        "--config",
        &recipe("mixture-grid.toml"),
        "--Q",
        "5",
        "--iters",
        "10",
        "--seed",
        "9",
        "--out",
        out,
    ]);
    assert_eq!(
        QuantizerFile::read(dir.path().join("quantizer.json"))
            .unwrap()
            .points
            .len(),
        5
    );
    let echo: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["optimizer"]["seed"], 9);
}

#[test]
fn malformed_config_fails_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        "target = \"gaussian\"\nmean = [0.0]\nQ = 4\nseed = 1\nlearning_rate = 0.1\n",
    )
    .unwrap();
    let res = hemq(&[
        "quantize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("learning_rate"));
    assert!(!out.exists());

    fs::write(&cfg, "target = \"gaussian\"\nmean = [0.0]\nQ = 4\n").unwrap();
    let res = hemq(&[
        "quantize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!res.status.success(), "missing seed must be rejected");
    assert!(!out.exists());

    let res = hemq(&[
        "quantize",
        "--config",
        &recipe("mixture-grid.toml"),
        "--lr",
        "-1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!res.status.success());
    assert!(!out.exists());
}

#[test]
fn flow_recipe_decreases_monotonically() {
    let dir = tempfile::tempdir().unwrap();
    let summary = ok(&[
        "flow",
        "--config",
        &recipe("flow-2d.toml"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let traj = trajectory(dir.path());
    assert!(!traj.is_empty());
    assert!(traj.windows(2).all(|w| w[1].1 < w[0].1), "flow loss not decreasing");
    assert!(traj[0].1 < summary["initial_loss"].as_f64().unwrap());
}

#[test]
fn mixture_recipe_reduces_the_loss() {
    let dir = tempfile::tempdir().unwrap();
    let summary = ok(&[
        "quantize",
        "--config",
        &recipe("mixture-grid.toml"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(summary["final_loss"].as_f64().unwrap() < summary["initial_loss"].as_f64().unwrap());
}

#[test]
fn exact1d_then_estimate_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let summary = ok(&["exact1d", "--config", &recipe("exact1d.toml"), "--out", out]);
    assert!(summary["loss"].as_f64().unwrap() > 0.0);
    let quantizer = dir.path().join("quantizer.json");
    let file = QuantizerFile::read(&quantizer).unwrap();
    assert_eq!(file.points.len(), 8);
    assert!(file.points.windows(2).all(|w| w[0][0] < w[1][0]));

    let cfg = dir.path().join("estimate.toml");
    fs::write(
        &cfg,
        format!(
            "estimator = \"blue-one-sample\"\nquantizer = {:?}\ntarget = \"gaussian\"\nmean = [0.0]\nJ = 128\nseed = 4\n",
            quantizer.to_str().unwrap()
        ),
    )
    .unwrap();
    let est = ok(&["estimate", "--config", cfg.to_str().unwrap()]);
    let keys: Vec<&str> = est.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, vec!["j", "kind", "q", "seed", "value"]);
    assert_eq!(est["kind"], "blue-one-sample");
    assert_eq!(
        (est["q"].as_u64(), est["j"].as_u64(), est["seed"].as_u64()),
        (Some(8), Some(128), Some(4))
    );
    assert!(est["value"].is_f64());

    let data = dir.path().join("data.csv");
    fs::write(&data, "x,label\n-1.0,0\n-0.9,0\n1.0,1\n1.2,1\n").unwrap();
    let eval_cfg = dir.path().join("eval.toml");
    fs::write(
        &eval_cfg,
        format!(
            "target = \"csv\"\ncsv = {:?}\nquantizer = {:?}\nseed = 0\n",
            data.to_str().unwrap(),
            quantizer.to_str().unwrap()
        ),
    )
    .unwrap();
    let eval = ok(&["eval", "--config", eval_cfg.to_str().unwrap(), "--label-col", "1"]);
    let keys: Vec<&str> = eval.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, vec!["ari", "confusion", "dve"]);
    assert_eq!(eval["dve"], 2);
    assert_eq!(eval["confusion"]["classes"], serde_json::json!([0, 1]));
}
