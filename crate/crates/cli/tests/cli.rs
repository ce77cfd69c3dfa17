use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poolbounds"))
        .args(args)
        .env_remove("POOLBOUNDS_THREADS")
        .output()
        .expect("binary runs")
}

fn fixture(dir: &Path) -> String {
    let mut body = String::from("y,d,x1,x2\n");
    for i in 0..30 {
        let x1 = (i as f64 * 0.7).cos();
        let x2 = (i % 4) as f64;
        let d = ((i * 5) % 7 < 3) as u8;
        body.push_str(&format!("{},{d},{x1},{x2}\n", (i % 5) as f64 / 4.0));
    }
    let p = dir.join("data.csv");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn base_args(input: &str) -> Vec<String> {
    [
        "bounds",
        "--input",
        input,
        "--outcome",
        "y",
        "--treatment",
        "d",
        "--covariates",
        "x1,x2",
        "--a-min",
        "0",
        "--a-max",
        "1",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn bounds_prints_a_versioned_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let mut args = base_args(&input);
    args.extend(["--L", "3", "--Q", "2", "--targets", "ATT,Y1"].map(String::from));
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["provenance"]["m"], 10);
    assert_eq!(report["provenance"]["config"]["Q"], 2);
    let results = report["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["target"], "ATT");
    for r in results {
        let ci = &r["confidence"]["ci_union"];
        assert!(ci["lower"].as_f64().unwrap() <= ci["upper"].as_f64().unwrap());
    }
}

#[test]
fn report_reruns_to_identical_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let first = dir.path().join("first.json");
    let clusters = dir.path().join("clusters.csv");
    let mut args = base_args(&input);
    args.extend([
        "--p-star".into(),
        "sample-proportion".into(),
        "--output".into(),
        first.to_str().unwrap().into(),
        "--clusters-csv".into(),
        clusters.to_str().unwrap().into(),
    ]);
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let csv = std::fs::read_to_string(&clusters).unwrap();
    assert!(csv.starts_with("cluster,n,n1,"));
    assert_eq!(csv.lines().count(), 4);

    let second = dir.path().join("second.json");
    let out = run(&["bounds", "--config", first.to_str().unwrap(), "--output", second.to_str().unwrap()]);
    assert!(out.status.success());
    let a: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&first).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&second).unwrap()).unwrap();
    assert_eq!(a["results"], b["results"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());

    let mut args = base_args(&input);
    args[12] = "0.5".into();
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row"));

    let mut args = base_args(&input);
    args[8] = "nope".into();
    assert_eq!(run(&args.iter().map(String::as_str).collect::<Vec<_>>()).status.code(), Some(3));

    let mut args = base_args(&input);
    args.extend(["--alpha", "1.5"].map(String::from));
    assert_eq!(run(&args.iter().map(String::as_str).collect::<Vec<_>>()).status.code(), Some(2));

    assert_eq!(run(&["bounds", "--input", &input]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--reps", "0"]).status.code(), Some(2));
    assert_eq!(run(&["weights", "--Q", "0"]).status.code(), Some(2));
}

#[test]
fn weights_csv_contains_figure_points() {
    let out = run(&["weights", "--p-star", "0.5", "--Q", "6", "--n", "6", "--grid", "10"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("series,x,weight"));
    let rows: Vec<(String, f64, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert!(rows.iter().any(|(s, x, w)| s == "sample_w1" && (x - 1.0 / 6.0).abs() < 1e-12 && *w == 2.0));
    assert_eq!(rows.iter().filter(|r| r.0 == "population_w").count(), 11);
}

#[test]
fn simulate_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("tables");
    let out = run(&[
        "simulate",
        "--dgp",
        "B",
        "--covariate",
        "discrete",
        "--reps",
        "4",
        "--n",
        "200",
        "--Q",
        "1,2,inf",
        "--seed",
        "7",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t1 = std::fs::read_to_string(out_dir.join("table1.csv")).unwrap();
    assert!(t1.starts_with("estimator,mean,median,sd,min,max\n"));
    assert!(t1.contains("\nLBinf,"));
    let t2 = std::fs::read_to_string(out_dir.join("table2.csv")).unwrap();
    assert_eq!(t2.lines().count(), 4);
}

#[test]
fn thread_count_variable_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_poolbounds"))
        .args(["weights", "--n", "3"])
        .env("POOLBOUNDS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_poolbounds"))
        .args(["weights", "--n", "3"])
        .env("POOLBOUNDS_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
}
