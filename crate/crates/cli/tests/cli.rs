use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn banditpack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_banditpack"))
        .args(args)
        .env_remove("BANDITPACK_THREADS")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const UNIT_ARM: &str = r#"{"type":"tabular","states":1,"actions":2,"idle":1,"initial":0,
    "reward":[[1.0,0.0]],"kernel":[[[1.0],[1.0]]]}"#;

/// Two one-state arms paying 1 per pull, one pull in one period.
fn write_example_one(dir: &TempDir) -> std::path::PathBuf {
    let path = dir.path().join("example1.json");
    let text = format!(r#"{{"horizon":1,"budget_k":1,"arms":[{UNIT_ARM},{UNIT_ARM}]}}"#);
    fs::write(&path, text).unwrap();
    path
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("valid json")
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = banditpack(&[
            "generate", "--n", "12", "--k", "3", "--T", "5", "--cv", "1", "--seed", "7", "--out", path_str(out),
            "--threads", threads,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 1);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let v = json(&fs::read(&a).unwrap());
    assert_eq!(v["arms"].as_array().unwrap().len(), 12);
    assert_eq!(v["arms"][0]["type"], "coin");
    assert_eq!(v["budget_k"], 3);
    assert_eq!(v["horizon"], 5);
}

#[test]
fn generate_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.json");
    let zero_cv = banditpack(&["generate", "--n", "4", "--k", "1", "--T", "3", "--cv", "0", "--out", path_str(&out)]);
    assert_eq!(zero_cv.status.code(), Some(2));

    // cv = 4 is unattainable once alpha reaches 1/16.
    let infeasible = banditpack(&[
        "generate", "--n", "4", "--k", "1", "--T", "3", "--cv", "4", "--alpha-min", "0.1", "--alpha-max", "0.2",
        "--out", path_str(&out),
    ]);
    assert_eq!(infeasible.status.code(), Some(3), "{}", String::from_utf8_lossy(&infeasible.stderr));

    let bad_budget = banditpack(&["generate", "--n", "4", "--k", "5", "--T", "3", "--cv", "1", "--out", path_str(&out)]);
    assert_eq!(bad_budget.status.code(), Some(2));
    assert_eq!(banditpack(&["generate", "--n", "4"]).status.code(), Some(2));
}

#[test]
fn missing_files_exit_two() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    let out = dir.path().join("sol.json");
    assert_eq!(banditpack(&["solve", "--instance", path_str(&missing), "--out", path_str(&out)]).status.code(), Some(2));
    assert_eq!(banditpack(&["oracle", "--instance", path_str(&missing)]).status.code(), Some(2));
    let inst = write_example_one(&dir);
    let o = banditpack(&["simulate", "--instance", path_str(&inst), "--solution", path_str(&missing)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_and_simulate_example_one() {
    let dir = TempDir::new().unwrap();
    let inst = write_example_one(&dir);
    let sol = dir.path().join("sol.json");
    let eps = 1e-6;
    let o = banditpack(&["solve", "--instance", path_str(&inst), "--epsilon", "1e-6", "--out", path_str(&sol)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let v = json(&fs::read(&sol).unwrap());
    let value: f64 = v["arms"].as_array().unwrap().iter().map(|a| a["expected_reward"].as_f64().unwrap()).sum();
    assert!((value - 1.0).abs() <= 2.0 * eps, "value {value}");
    assert!((v["dual_value"].as_f64().unwrap() - 1.0).abs() <= 2.0 * eps);
    assert!((v["alpha"].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert_eq!(v["arms"][0]["occupancy"].as_array().unwrap().len(), 1);

    let log = dir.path().join("traj.csv");
    let summary_path = dir.path().join("summary.json");
    let o = banditpack(&[
        "simulate", "--instance", path_str(&inst), "--solution", path_str(&sol), "--trajectories", "20000", "--seed",
        "3", "--log", path_str(&log), "--out", path_str(&summary_path),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&o.stdout);
    assert_eq!(s, json(&fs::read(&summary_path).unwrap()));
    assert_eq!(s["trajectories"], 20000);
    assert!((s["mean_reward"].as_f64().unwrap() - 0.75).abs() < 0.01, "{s}");
    assert!(s["std_err"].as_f64().unwrap() > 0.0);
    assert!(s.get("discards_mean").is_some());

    let mut reader = csv::Reader::from_path(&log).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["t", "arm", "action", "state_before", "state_after", "reward"]);
    for row in reader.records() {
        let row = row.unwrap();
        assert_eq!(&row[0], "0");
        assert_eq!(&row[2], "0");
        assert_eq!(row[5].parse::<f64>().unwrap(), 1.0);
    }
}

#[test]
fn simulate_is_thread_count_invariant() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("inst.json");
    let sol = dir.path().join("sol.json");
    let gen = ["generate", "--n", "8", "--k", "2", "--T", "6", "--cv", "1", "--seed", "11", "--out", path_str(&inst)];
    assert!(banditpack(&gen).status.success());
    assert!(banditpack(&["solve", "--instance", path_str(&inst), "--out", path_str(&sol)]).status.success());
    let run = |threads: &str| {
        let o = banditpack(&[
            "simulate", "--instance", path_str(&inst), "--solution", path_str(&sol), "--trajectories", "500",
            "--threads", threads,
        ]);
        assert!(o.status.success());
        o.stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn unconstrained_solve_reports_alpha_one() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("free.json");
    fs::write(&inst, format!(r#"{{"horizon":2,"budget_k":2,"arms":[{UNIT_ARM},{UNIT_ARM}]}}"#)).unwrap();
    let sol = dir.path().join("sol.json");
    let o = banditpack(&["solve", "--instance", path_str(&inst), "--out", path_str(&sol)]);
    assert!(o.status.success());
    let v = json(&fs::read(&sol).unwrap());
    assert_eq!(v["alpha"].as_f64(), Some(1.0));
    assert_eq!(v["lambda_feas"].as_f64(), Some(0.0));
}

#[test]
fn oracle_prints_j_star_and_rejects_large_instances() {
    let dir = TempDir::new().unwrap();
    let inst = write_example_one(&dir);
    let o = banditpack(&["oracle", "--instance", path_str(&inst)]);
    assert!(o.status.success());
    assert_eq!(json(&o.stdout)["j_star"].as_f64(), Some(1.0));

    let big = dir.path().join("big.json");
    assert!(banditpack(&["generate", "--n", "5", "--k", "1", "--T", "4", "--cv", "1", "--out", path_str(&big)])
        .status
        .success());
    assert_eq!(banditpack(&["oracle", "--instance", path_str(&big)]).status.code(), Some(5));
}

#[test]
fn bench_writes_csv_and_summary() {
    let dir = TempDir::new().unwrap();
    let csv_path = dir.path().join("bench.csv");
    let json_path = dir.path().join("bench.json");
    let o = banditpack(&[
        "bench", "--n", "10", "--k", "2", "--T", "4", "--cv", "1", "--instances", "3", "--trajectories", "50",
        "--csv", path_str(&csv_path), "--json", path_str(&json_path),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["cv", "n", "k", "T", "instance_seed", "mean_reward", "std_err", "dual_bound", "ratio"]
    );
    let seeds: Vec<u64> = reader.records().map(|r| r.unwrap()[4].parse().unwrap()).collect();
    assert_eq!(seeds, [0, 1, 2]);

    let rows = json(&fs::read(&json_path).unwrap());
    let row = &rows.as_array().unwrap()[0];
    assert_eq!(row["T"], 4);
    let perf = row["performance"].as_f64().unwrap();
    assert!(perf > 0.0 && perf <= 1.05, "{perf}");

    assert_eq!(banditpack(&["bench", "--n", "10"]).status.code(), Some(2));
}
