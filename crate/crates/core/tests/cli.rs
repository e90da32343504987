use std::fs;
use std::process::{Command, Output};

use haarfunc::density::DensityModel;
use haarfunc::rng::{stream, Purpose};

fn haarfunc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_haarfunc")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn grid_and_calibrate() {
    let g = json(&haarfunc(&["grid", "--n", "65536", "--d", "2"]));
    assert_eq!(g["N"], 3);
    assert_eq!(g["entries"][2]["k"], 4 * 65536);
    let c = json(&haarfunc(&["calibrate", "--n", "1024", "--reps", "100", "--seed", "4"]));
    assert!(c["c_opt"].as_f64().unwrap() > 0.0);
    assert_eq!(c, json(&haarfunc(&["calibrate", "--n", "1024", "--reps", "100", "--seed", "4"])));
}

#[test]
fn estimate_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sample.txt");
    let x = DensityModel::Uniform.sample(2000, &mut stream(1, Purpose::Example, 2000, 0)).unwrap();
    fs::write(&path, x.iter().map(|v| format!("{v}\n")).collect::<String>()).unwrap();
    let p = path.to_str().unwrap();
    let r = json(&haarfunc(&["estimate", "--input", p, "--functional", "square", "--beta", "0.2"]));
    assert_eq!(r["n"], 2000);
    assert!((r["estimate"].as_f64().unwrap() - 1.0).abs() < 0.2);
    let r = json(&haarfunc(&["estimate", "--input", p, "--functional", "entropy", "--adaptive", "--c-opt", "1.5", "--floor", "0.5"]));
    assert_eq!(r["method"], "general");
    let bad = haarfunc(&["estimate", "--input", p, "--functional", "sqrt", "--beta", "0.2"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn simulate_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("results.csv");
    let summary = dir.path().join("summary.json");
    let config = dir.path().join("config.json");
    let text = serde_json::json!({
        "model": {"kind": "linear_ramp", "a": 0.5},
        "estimator": {"type": "cubic", "beta": 0.2},
        "n_list": [256, 512, 1024], "reps": 20, "seed": 3,
        "output": {"csv": csv, "summary": summary},
    });
    fs::write(&config, text.to_string()).unwrap();
    let s = json(&haarfunc(&["simulate", "--config", config.to_str().unwrap()]));
    assert_eq!(s["metadata"]["rng_algorithm"], haarfunc::rng::RNG_ALGORITHM);
    let first = fs::read(&csv).unwrap();
    json(&haarfunc(&["simulate", "--config", config.to_str().unwrap()]));
    assert_eq!(first, fs::read(&csv).unwrap());
    assert!(summary.exists());

    let r = json(&haarfunc(&["report", "--input", csv.to_str().unwrap(), "--beta", "0.2"]));
    assert_eq!(r["per_n"].as_array().unwrap().len(), 3);
    let plot = fs::read_to_string(dir.path().join("results.plot.csv")).unwrap();
    assert_eq!(plot.lines().count(), 4);
}
