use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const LINEAR_MAP: &str = "[map]\nmatrix = [[3, 1], [2, 0]]\nkind = \"raw\"\n";

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anosov-lab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("lab.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_in(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let out = dir.join("out");
    let mut args = vec!["run", "--config", config, "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    lab(&args)
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn linear_certify_and_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            "seed = 3\n{LINEAR_MAP}\n[[experiments]]\nname = \"cert\"\nkind = \"certify\"\n\n\
             [[experiments]]\nname = \"exp\"\nkind = \"exponents\"\nbirkhoff_samples = 20000\n"
        ),
    );
    let o = run_in(dir.path(), &config, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let log_alpha = ((3.0 + 17f64.sqrt()) / 2.0).ln();
    let csv = std::fs::read_to_string(dir.path().join("out/exp.csv")).unwrap();
    let mut lines: Vec<&str> = csv.lines().collect();
    let trailer = lines.pop().unwrap();
    assert!(trailer.starts_with("# config_hash=") && trailer.contains(" version="), "{trailer}");
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = header.iter().position(|h| *h == "lambda_u").unwrap();
    let mut periodic = 0;
    for row in &lines[1..] {
        let v: f64 = row.split(',').nth(col).unwrap().parse().unwrap();
        assert!((v - log_alpha).abs() < 1e-9, "{row}");
        periodic += row.starts_with("periodic") as usize;
    }
    assert_eq!(periodic, 6, "2 orbits of period 1 and 4 of period 2 (one pair per 2-cycle)");
    let s = summary(dir.path());
    assert_eq!(s["experiments"].as_array().unwrap().len(), 2);
    assert_eq!(s["experiments"][1]["metrics"]["periodic_points"], serde_json::json!([4, 8]));
    assert_eq!(s["experiments"][0]["metrics"]["class"], "NonInvertibleAnosov");
}

#[test]
fn missing_matrix_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "seed = 1\n\n[map]\nkind = \"raw\"\n\n[[experiments]]\nname = \"c\"\nkind = \"certify\"\n");
    let o = run_in(dir.path(), &config, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("matrix"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn other_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_tol = write_config(dir.path(), &format!("{LINEAR_MAP}[tolerances]\nrho_tol = 0.0\n"));
    let o = run_in(dir.path(), &bad_tol, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    let ok = write_config(dir.path(), &format!("{LINEAR_MAP}[[experiments]]\nname = \"c\"\nkind = \"certify\"\n"));
    let o = run_in(dir.path(), &ok, &["--experiment", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    let o = lab(&["exponents", "--config", &ok, "--experiment", "c"]);
    assert_eq!(o.status.code(), Some(2), "kind mismatch");
    let o = lab(&["run", "--config", "/nonexistent/lab.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn expanding_matrix_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[map]\nmatrix = [[2, 0], [0, 2]]\n");
    let out = dir.path().join("out");
    let o = lab(&["certify", "--config", &config, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("expanding map: stable apparatus unavailable"), "{}", stderr(&o));
}

#[test]
fn failing_experiment_exits_1_and_is_listed() {
    let dir = tempfile::tempdir().unwrap();
    // a leaf too short for any Hölder scale
    let config = write_config(
        dir.path(),
        &format!(
            "{LINEAR_MAP}[tolerances]\ncert_grid = 64\n\n[[experiments]]\nname = \"cert\"\nkind = \"certify\"\n\n\
             [[experiments]]\nname = \"short\"\nkind = \"rigidity\"\nmax_period = 1\nleaf_halflength = 0.001\nholder_min_level = 1\nholder_max_level = 6\n"
        ),
    );
    let o = run_in(dir.path(), &config, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("failed experiments: short"), "{}", stderr(&o));
    let s = summary(dir.path());
    assert_eq!(s["experiments"][0]["status"], "ok");
    assert_eq!(s["experiments"][1]["status"], "failed");
    assert!(s["experiments"][1]["error"].as_str().unwrap().contains("scales"));
}

const DETERMINISM: &str = r#"
seed = 11

[map]
matrix = [[3, 1], [2, 0]]
kind = "raw"
terms = [
    { k = [0, 1], amp = [0.0079577, 0.0] },
    { k = [1, 0], amp = [0.0, 0.0079577] },
]

[tolerances]
cert_grid = 64

[[experiments]]
name = "exp"
kind = "exponents"
birkhoff_samples = 5000

[[experiments]]
name = "conj"
kind = "conjugacy"
points = 200

[[experiments]]
name = "strip"
kind = "strip"
k_max = 2
particles = 400
"#;

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn outputs_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DETERMINISM);
    let mut runs = Vec::new();
    for threads in ["1", "3", "3"] {
        let out = dir.path().join(format!("out{}", runs.len()));
        let o = lab(&["run", "--config", &config, "--out-dir", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        runs.push(csvs(&out));
    }
    assert_eq!(runs[0].len(), 3);
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);

    // the seed reaches every randomized table
    let out = dir.path().join("seeded");
    let o = lab(&["run", "--config", &config, "--out-dir", out.to_str().unwrap(), "--seed", "12"]);
    assert_eq!(o.status.code(), Some(0));
    let other = csvs(&out);
    for (a, b) in runs[0].iter().zip(&other) {
        assert_ne!(a.1, b.1, "{}", a.0);
    }
}

#[test]
fn adding_an_experiment_keeps_other_streams() {
    let dir = tempfile::tempdir().unwrap();
    let base = write_config(dir.path(), DETERMINISM);
    let a = dir.path().join("a");
    assert_eq!(lab(&["run", "--config", &base, "--out-dir", a.to_str().unwrap(), "--experiment", "conj"]).status.code(), Some(0));
    let extended = dir.path().join("extended.toml");
    std::fs::write(&extended, format!("{DETERMINISM}\n[[experiments]]\nname = \"more\"\nkind = \"conjugacy\"\npoints = 10\n")).unwrap();
    let b = dir.path().join("b");
    let o = lab(&["run", "--config", extended.to_str().unwrap(), "--out-dir", b.to_str().unwrap(), "--experiment", "conj"]);
    assert_eq!(o.status.code(), Some(0));
    // same stream, so the same rows; only the config hash differs
    let body = |p: &Path| {
        let s = std::fs::read_to_string(p.join("conj.csv")).unwrap();
        s.lines().filter(|l| !l.starts_with('#')).map(str::to_string).collect::<Vec<_>>()
    };
    assert_eq!(body(&a), body(&b));
}

#[test]
fn subcommand_without_matching_experiment_runs_a_default() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &format!("{LINEAR_MAP}[tolerances]\ncert_grid = 32\n"));
    let out = dir.path().join("out");
    let o = lab(&["certify", "--config", &config, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("certify.csv").exists());
}

#[test]
fn rigidity_on_smooth_conjugate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[map]\nexample = \"smooth_conjugate\"\n\n[tolerances]\ncert_grid = 1024\nconjugacy_tol = 1e-10\n\n\
         [[experiments]]\nname = \"cert\"\nkind = \"certify\"\ntheta_u = 0.3\ntheta_s = 0.3\n\n\
         [[experiments]]\nname = \"rig\"\nkind = \"rigidity\"\nmax_period = 3\n",
    );
    let out = dir.path().join("smooth");
    let o = lab(&["rigidity", "--config", &config, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let m = &s["experiments"][0]["metrics"];
    assert!(m["livshitz_obstruction"].as_f64().unwrap() < 1e-6, "{m}");
    let slope = m["holder_slope"].as_f64().unwrap();
    assert!((0.98..=1.02).contains(&slope), "{m}");
    assert_eq!(m["theorem_a"], "consistent");
    assert!(out.join("rig_holder.csv").exists());

    let lin_cfg = dir.path().join("lin.toml");
    std::fs::write(&lin_cfg, format!("{LINEAR_MAP}[tolerances]\ncert_grid = 32\n")).unwrap();
    let lin_out = dir.path().join("lin");
    assert_eq!(lab(&["certify", "--config", lin_cfg.to_str().unwrap(), "--out-dir", lin_out.to_str().unwrap()]).status.code(), Some(0));
    let rep_dir = dir.path().join("rep");
    let o = lab(&[
        "report",
        out.join("summary.json").to_str().unwrap(),
        lin_out.join("summary.json").to_str().unwrap(),
        "--out-dir",
        rep_dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(rep_dir.join("report.json")).unwrap()).unwrap();
    let fam = r["families"].as_array().unwrap();
    assert_eq!(fam.len(), 2);
    assert_eq!(fam[0]["theorem_a"], "consistent");
    assert!(fam[1]["theorem_a"].is_null());
    let o = lab(&["report", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
