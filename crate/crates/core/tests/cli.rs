use std::path::Path;
use std::process::{Command, Output};

use quantquad::io::load_codebook;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quantquad"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json output")
}

#[test]
fn info_version() {
    let out = run(&["info", "--version"]);
    assert_eq!(out.status.code(), Some(0));
    let line = String::from_utf8(out.stdout).unwrap();
    assert_eq!(line.trim(), format!("quantquad {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn quantize_two_point_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let cb_path = dir.path().join("cb.csv");
    let out = run(&[
        "quantize", "--measure", "uniform_cube:1", "--n", "2", "--r", "1", "--seed", "7", "--pool", "400000", "--out",
        cb_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cb = load_codebook(&cb_path).unwrap();
    let mut pts: Vec<f64> = cb.points().iter().map(|p| p.raw()[0]).collect();
    pts.sort_by(f64::total_cmp);
    assert!((pts[0] - 0.25).abs() < 5e-3 && (pts[1] - 0.75).abs() < 5e-3, "{pts:?}");
    assert_eq!(cb.weights().map(|w| w.len()), Some(2));
    let text = std::fs::read_to_string(&cb_path).unwrap();
    assert!(text.lines().nth(1).unwrap().contains("\"seed\":7"));
}

#[test]
fn quad_euler_schedule_echo() {
    let out = run(&["quad", "--algo", "euler", "--budget", "1000", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["n"], 12);
    assert_eq!(v["result"]["k"], 83);
    assert_eq!(v["result"]["oracle_cost"], 12 * 83);
    assert_eq!(v["seed"], 3);
    assert_eq!(v["command"]["command"]["quad"]["budget"], 1000);
}

#[test]
fn outputs_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("r.json");
    let mut bytes = Vec::new();
    for workers in ["1", "3"] {
        let out = run(&[
            "quad", "--algo", "vrmc", "--measure", "std_normal:2", "--functional", "abs_dev(0.1,0.2)", "--n", "32",
            "--weight-samples", "20000", "--pool", "4000", "--restarts", "2", "--seed", "11", "--workers", workers,
            "--out", f.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        bytes.push(std::fs::read(&f).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn voronoi_with_saved_codebook() {
    let dir = tempfile::tempdir().unwrap();
    let cb = dir.path().join("cb.csv");
    let q = run(&["quantize", "--measure", "uniform_cube:1", "--n", "4", "--pool", "20000", "--out", cb.to_str().unwrap()]);
    assert_eq!(q.status.code(), Some(0));
    let out = run(&["quad", "--algo", "voronoi", "--measure", "uniform_cube:1", "--functional", "coord(0)", "--codebook", cb.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let est = json(&out)["result"]["estimate"].as_f64().unwrap();
    assert!((est - 0.5).abs() < 0.01, "{est}");
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(run(&["quad", "--algo", "euler", "--budget", "5"]).status.code(), Some(1));
    assert_eq!(run(&["quad", "--algo", "mc", "--measure", "cauchy:1", "--n", "4"]).status.code(), Some(1));
    assert_eq!(run(&["quad", "--algo", "euler", "--budget", "100", "--n", "4"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    // the Euler ratio of GBM overflows for an absurd drift
    let blown = run(&["quad", "--algo", "euler", "--measure", "gbm:1e308:1e308:1e308", "--n", "4", "--k", "8"]);
    assert_eq!(blown.status.code(), Some(2), "{}", String::from_utf8_lossy(&blown.stderr));
}

#[test]
fn failed_check_exits_three_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    // MC error decays like n^{-1/2}; a bracket around -1 must fail
    std::fs::write(
        &config,
        "name = \"mc\"\nalgorithm = \"mc\"\nmeasure = \"uniform_cube:1\"\nfunctional = \"coord(0)\"\n\
         ladder = [16, 64, 256, 1024]\nreplications = 50\nreference = 0.5\nbracket = [-1.1, -0.9]\n",
    )
    .unwrap();
    let report = dir.path().join("rates.csv");
    let out = run(&["rates", "--config", config.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("size,n,k,rmse,stderr,slope,pass"));
    assert!(text.lines().filter(|l| !l.starts_with('#')).skip(1).all(|l| l.ends_with("false")));

    let ok = run(&["adversary", "--check", "events", "--samples", "20000"]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(json(&ok)["pass"], true);
}

#[test]
fn missing_output_dir_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("missing").join("r.json");
    let out = run(&["quad", "--algo", "mc", "--measure", "uniform_cube:1", "--functional", "coord(0)", "--n", "10", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!Path::new(&target).exists());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = quantquad::config::RatesConfig::from_toml(&std::fs::read_to_string(&path).unwrap()).unwrap();
            cfg.build(quantquad::rng::SeedSpec::new(0)).unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
