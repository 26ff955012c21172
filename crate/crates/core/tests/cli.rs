use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn randlsv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_randlsv"))
        .args(args)
        .output()
        .expect("failed to launch randlsv")
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

fn header_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .filter_map(|l| l.strip_prefix("# "))
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_is_reproducible_with_one_thread() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    for (path, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let out = randlsv(&["--threads", "1", "--seed", seed, "simulate", "--steps", "5000", "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ta, tb, tc) = (fs::read(&a).unwrap(), fs::read(&b).unwrap(), fs::read(&c).unwrap());
    assert_eq!(ta, tb);
    assert_ne!(ta, tc);
    let text = String::from_utf8(ta).unwrap();
    assert_eq!(header_value(&text, "format"), Some("1"));
    assert_eq!(header_value(&text, "seed"), Some("5"));
    assert!(header_value(&text, "rng").is_some());
    assert_eq!(data_rows(&text).len(), 5001);
    let meta = read_json(&dir.path().join("a.csv.meta.json"));
    assert!(meta["runtime_seconds"].as_f64().is_some());
}

#[test]
fn simulate_zero_steps_is_the_initial_point() {
    let out = randlsv(&["simulate", "--steps", "0", "--x0", "0.25", "--omega0", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 1);
    let fields: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(fields[0], "0");
    assert_eq!(fields[1].parse::<f64>().unwrap(), 0.25);
    assert_eq!(fields[2].parse::<f64>().unwrap(), 0.5);
}

#[test]
fn simulate_rejects_points_outside_the_square() {
    assert_eq!(randlsv(&["simulate", "--x0", "1.5"]).status.code(), Some(2));
    assert_eq!(randlsv(&["simulate", "--omega0", "1.0"]).status.code(), Some(2));
}

#[test]
fn tower_two_levels() {
    let out = randlsv(&["tower", "--i-max", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 6);
    let mut total = 0.0;
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        let w = f[3].parse::<f64>().unwrap() - f[2].parse::<f64>().unwrap();
        let h = f[5].parse::<f64>().unwrap() - f[4].parse::<f64>().unwrap();
        assert!(w > 0.0 && h > 0.0);
        total += w * h;
    }
    assert!(total < 0.5);
}

#[test]
fn parameter_errors_exit_two() {
    assert_eq!(randlsv(&["--alpha", "0.8", "--beta", "0.7", "tower"]).status.code(), Some(2));
    assert_eq!(randlsv(&["--p1", "1.0", "tower"]).status.code(), Some(2));
    assert_eq!(randlsv(&["verify", "bogus"]).status.code(), Some(2));
    assert_eq!(randlsv(&["asymptotics", "--n-max", "50"]).status.code(), Some(2));
    assert_eq!(randlsv(&["correlation", "--bins", "64", "--psi", "indicator_right_half", "--mc-n-max", "0"]).status.code(), Some(2));
}

#[test]
fn density_not_converged_exits_three() {
    let out = randlsv(&["density", "--bins", "64", "--max-iter", "2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn density_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let out = randlsv(&["--beta", "1.0", "density", "--bins", "512", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.lines().any(|l| l == "bin_lo,bin_hi,f_value"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 512);
    let mass: f64 = rows
        .iter()
        .map(|r| {
            let f: Vec<f64> = r.split(',').map(|v| v.parse().unwrap()).collect();
            (f[1] - f[0]) * f[2]
        })
        .sum();
    assert!((mass - 1.0).abs() < 1e-12);
    let summary = read_json(&dir.path().join("d.summary.json"));
    assert!(summary["residual"].as_f64().unwrap() < 1e-9);
    assert!(summary["mass_below_1_16"].as_f64().is_some());
}

#[test]
fn correlation_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let out = randlsv(&[
        "correlation", "--bins", "256", "--n-max", "200", "--mc-n-max", "5", "--mc-chains", "4",
        "--mc-pairs", "2000", "--burn-in", "100", "--fit-lo", "20", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.lines().any(|l| l == "n,cor_operator,cor_mc,se"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 201);
    assert!(rows[5].split(',').nth(2).unwrap().parse::<f64>().is_ok());
    assert_eq!(rows[6].split(',').nth(2), Some(""));
    let summary = read_json(&dir.path().join("c.summary.json"));
    assert!(summary["slope"]["exponent"].as_f64().is_some());
}

#[test]
fn asymptotics_outputs_and_thread_independence() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for threads in ["1", "3"] {
        let path = dir.path().join(format!("a{threads}.csv"));
        let out = randlsv(&[
            "--threads", threads, "--seed", "2", "asymptotics", "--n-max", "200", "--samples", "3000",
            "--fit-lo", "30", "--out", path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        tables.push(fs::read_to_string(&path).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    assert!(tables[0].lines().any(|l| l == "n,E_exact,E_mc,se,x_n_alpha,x_n_beta"));
    let tail = fs::read_to_string(dir.path().join("a1.tail.csv")).unwrap();
    assert!(tail.lines().any(|l| l == "n,tail,k_max,converged,remainder_bound,certified"));
    let summary = read_json(&dir.path().join("a1.summary.json"));
    assert!(summary["exponent_expectation"]["exponent"].as_f64().is_some());
    assert!(summary["mean_return_time"]["value"].as_f64().unwrap() > 1.0);
}

#[test]
fn verify_writes_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.json");
    let out = randlsv(&["verify", "bounds", "--depth", "8", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let ledger = read_json(&path);
    let entries = ledger["entries"].as_array().unwrap();
    assert!(!entries.is_empty());
    assert!(entries.iter().all(|e| e["pass"] == true));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# comment\nalpha = 0.3\nbeta=0.9\ni_max = 3\n").unwrap();
    let out = randlsv(&["--config", cfg.to_str().unwrap(), "tower"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(header_value(&text, "params alpha").unwrap().starts_with("0.3 beta=0.9"));
    assert_eq!(data_rows(&text).len(), 14);

    let out = randlsv(&["--config", cfg.to_str().unwrap(), "--alpha", "0.2", "tower", "--i-max", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(header_value(&text, "params alpha").unwrap().starts_with("0.2 beta=0.9"));
    assert_eq!(data_rows(&text).len(), 2);

    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(randlsv(&["--config", cfg.to_str().unwrap(), "tower"]).status.code(), Some(2));
}
