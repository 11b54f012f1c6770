use std::path::PathBuf;
use std::process::{Command, Output};

use delaypred_core::backstepping::BacksteppingCertificate;
use delaypred_core::model::{LinearPlant, NominalStabilizer};
use nalgebra::{DMatrix, DVector};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_delaypred"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn delaypred")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn kv(line: &str, key: &str) -> String {
    line.split_whitespace()
        .find_map(|t| t.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {line:?}"))
        .to_string()
}

#[test]
fn table1_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("t1.csv");
    let second = dir.path().join("t2.csv");
    for path in [&first, &second] {
        let out = run(&["table1", "-o", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    let text = std::fs::read_to_string(&first).unwrap();
    assert_eq!(text.as_bytes(), std::fs::read(&second).unwrap().as_slice());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "r,necessary,sufficient,c_star");
    assert_eq!(lines.len(), 14);
    assert!(lines[1].starts_with("0,1.000000,1.000000"));
    let r7: Vec<&str> = lines.iter().find(|l| l.starts_with("7,")).unwrap().split(',').collect();
    let sufficient: f64 = r7[2].parse().unwrap();
    assert!((sufficient - 0.1144).abs() <= 5e-4, "{sufficient}");
    assert!(!text.contains('\r'));
}

#[test]
fn table1_unwritable_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("t.csv");
    assert_eq!(run(&["table1", "-o", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn bound_values() {
    let out = run(&["bound", "--r", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let s = stdout(&out);
    assert_eq!(kv(&s, "necessary"), "0.500000");
    assert_eq!(kv(&s, "sufficient"), "0.500000");

    let s = stdout(&run(&["bound", "--r", "0"]));
    assert_eq!(kv(&s, "necessary"), "1.000000");
    assert_eq!(kv(&s, "sufficient"), "1.000000");

    let s = stdout(&run(&["bound", "--r", "10"]));
    let v: f64 = kv(&s, "sufficient").parse().unwrap();
    assert!((v - 0.0807).abs() <= 5e-4);

    assert_eq!(run(&["bound", "--r", "-1"]).status.code(), Some(2));
    assert_eq!(run(&["bound"]).status.code(), Some(2));
}

#[test]
fn certify_scalar_example() {
    let path = scenario("scalar_r1.json");
    let path = path.to_str().unwrap();
    let pass = run(&["certify", path, "--a", "0.535"]);
    assert_eq!(pass.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&pass.stdout).unwrap();
    assert_eq!(report["report"]["pass"], true);
    assert!(report["report"]["worst_margin"].as_f64().unwrap() < 0.0);

    assert_eq!(run(&["certify", path, "--a", "0.9"]).status.code(), Some(1));

    let search = run(&["certify", path, "--search", "1.0"]);
    assert_eq!(search.status.code(), Some(0));
    let best: f64 = kv(&stdout(&search), "largest_certified_a").parse().unwrap();
    assert!(best >= 0.535, "{best}");

    assert_eq!(run(&["certify", path, "--a", "0.5", "--search", "1.0"]).status.code(), Some(2));
}

#[test]
fn certify_general_scenario() {
    let path = scenario("double_integrator.json");
    let out = run(&["certify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["law"], "nominal_predictor");
}

#[test]
fn simulate_constant_solution() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let out = run(&["simulate", scenario("constant_solution.json").to_str().unwrap(), "-o", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let s = stdout(&out);
    assert_eq!(kv(&s, "decay_rate"), "1.0");
    assert_eq!(kv(&s, "diverged"), "false");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x_1,y_1,y_2,u,d,vbar"));
    let xs: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(xs.len(), 201);
    assert!(xs.iter().all(|&x| (x - 1.5).abs() <= 1e-12));
}

#[test]
fn simulate_nominal_decay_and_zero_state() {
    let dir = tempfile::tempdir().unwrap();
    let src = scenario("double_integrator.json");
    let csv = dir.path().join("traj.csv");
    let out = run(&["simulate", src.to_str().unwrap(), "-o", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rate: f64 = kv(&stdout(&out), "decay_rate").parse().unwrap();

    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
    let plant = LinearPlant::new(a, DVector::from_vec(vec![0.005, 0.1]), DMatrix::zeros(2, 2), 0.0, 3).unwrap();
    let stab = NominalStabilizer::from_gain(&plant, DVector::from_vec(vec![-20.0, -5.0])).unwrap();
    let cert = BacksteppingCertificate::relaxed(8.0, 1.0, 0.0, stab.lambda()).unwrap();
    assert!(rate <= stab.lambda() + 1.0 / cert.c + 1e-9, "{rate} vs {}", stab.lambda() + 1.0 / cert.c);

    let text = std::fs::read_to_string(&src).unwrap().replace("\"x0\": [1.0, 0.0]", "\"x0\": [0.0, 0.0]");
    let zero = dir.path().join("zero.json");
    std::fs::write(&zero, text).unwrap();
    let out = run(&["simulate", zero.to_str().unwrap(), "-o", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    for line in text.lines().skip(1) {
        assert!(line.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0), "{line}");
    }
}

#[test]
fn simulate_is_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let src = std::fs::read_to_string(scenario("double_integrator.json"))
        .unwrap()
        .replace("\"strategy\": \"zero\"", "\"strategy\": \"random\"");
    let path = dir.path().join("random.json");
    std::fs::write(&path, src).unwrap();
    let outputs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let csv = dir.path().join(format!("r{i}.csv"));
            let out = run(&["simulate", path.to_str().unwrap(), "-o", csv.to_str().unwrap()]);
            assert_eq!(out.status.code(), Some(0));
            std::fs::read(csv).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn invalid_scenarios_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let good = std::fs::read_to_string(scenario("scalar_r1.json")).unwrap();
    let cases = [
        good.replace("\"r\": 1", "\"r\": \"one\""),
        good.replace("\"B\": [1.0]", "\"B\": [1.0, 2.0]"),
        good.replace("\"lambda\": 0.0", "\"lambda\": 0.0, \"bogus\": true"),
        good.replace("\"P\": [[1.0]]", "\"P\": [[-1.0]]"),
        "{ not json".to_string(),
    ];
    for (i, text) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.json"));
        std::fs::write(&path, text).unwrap();
        let out = run(&["certify", path.to_str().unwrap(), "--a", "0.5"]);
        assert_eq!(out.status.code(), Some(2), "case {i}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("invalid scenario"), "case {i}: {err}");
    }
    let out = run(&["simulate", "/nonexistent/scenario.json", "-o", "/tmp/x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_cap_is_honored() {
    let out = bin().args(["bound", "--r", "3"]).env("DELAYPRED_THREADS", "1").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = bin().args(["bound", "--r", "3"]).env("DELAYPRED_THREADS", "many").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
