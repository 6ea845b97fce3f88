use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsr"))
        .args(args)
        .output()
        .expect("run bsr")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate_linear(dir: &Path, seed: &str) -> std::path::PathBuf {
    let out = dir.join(format!("lin{seed}.csv"));
    let o = bsr(&[
        "--seed",
        seed,
        "generate",
        "expression",
        "--expr",
        "(+ p1 (* p2 x1))",
        "--theta",
        "1.5,-2",
        "--range",
        "-2:2",
        "--n",
        "60",
        "--noise",
        "0.1",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&bsr(&["--help"])), 0);
    assert_eq!(code(&bsr(&["--version"])), 0);
    assert_eq!(code(&bsr(&["sample", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&bsr(&["no-such-command"])), 1);
    assert_eq!(code(&bsr(&["sample", "--data"])), 1);
    assert_eq!(
        code(&bsr(&[
            "sample",
            "--data",
            "/nonexistent.csv",
            "--out",
            "/tmp/x.jsonl"
        ])),
        1
    );
    assert_eq!(
        code(&bsr(&[
            "generate",
            "expression",
            "--expr",
            "(+ x1",
            "--range",
            "0:1",
            "--out",
            "/tmp/never.csv"
        ])),
        1
    );
    assert_eq!(code(&bsr(&["--threads", "0", "validate-equilibrium"])), 1);
}

#[test]
fn generate_is_reproducible_and_writes_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate_linear(dir.path(), "7");
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 61);
    assert_eq!(text.lines().next().unwrap(), "x1,y");
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(format!("{}.meta.json", a.display())).unwrap())
            .unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);

    let b = dir.path().join("again.csv");
    fs::copy(&a, &b).unwrap();
    let c = generate_linear(dir.path(), "7");
    assert_eq!(
        fs::read_to_string(&b).unwrap(),
        fs::read_to_string(&c).unwrap()
    );
    let d = generate_linear(dir.path(), "8");
    assert_ne!(
        fs::read_to_string(&b).unwrap(),
        fs::read_to_string(&d).unwrap()
    );
}

#[test]
fn generate_rossler() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = bsr(&[
        "--seed",
        "1",
        "generate",
        "rossler",
        "--n",
        "50",
        "--target",
        "x",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x,y,z,dx");
    assert_eq!(text.lines().count(), 51);
    let o = bsr(&["generate", "rossler", "--dt", "0", "--out", p(&out)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn sample_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_linear(dir.path(), "3");
    let trace = dir.path().join("trace.jsonl");
    let o = bsr(&[
        "--seed",
        "5",
        "sample",
        "--data",
        p(&data),
        "--ops",
        "+,*,sin",
        "--n-params",
        "2",
        "--steps",
        "300",
        "--temperatures",
        "4",
        "--out",
        p(&trace),
        "--progress",
        "100",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("best DL"));
    let first = fs::read_to_string(&trace).unwrap();
    let meta: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(meta["type"], "metadata");
    assert_eq!(meta["seed"], 5);
    assert!(first.lines().count() > 100);

    let pred = dir.path().join("pred.csv");
    let o = bsr(&[
        "predict",
        "--trace",
        p(&trace),
        "--grid",
        "-1:1:5",
        "--out",
        p(&pred),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&pred).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x1,median,low,high,n_finite_members");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert!(r[2] <= r[1] && r[1] <= r[3]);
        assert!((r[1] - (1.5 - 2.0 * r[0])).abs() < 0.5, "{r:?}");
    }

    let o = bsr(&[
        "predict",
        "--trace",
        p(&trace),
        "--mode",
        "mdl",
        "--query",
        p(&data),
    ]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("MAE"), "{stdout}");

    let o = bsr(&[
        "predict",
        "--trace",
        p(&trace),
        "--mode",
        "median-model",
        "--query",
        p(&data),
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("distance"));

    let o = bsr(&["predict", "--trace", p(&trace)]);
    assert_eq!(code(&o), 1);
    let o = bsr(&["predict", "--trace", p(&data), "--grid", "0:1:3"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn sample_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_linear(dir.path(), "4");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = bsr(&[
            "--seed",
            "9",
            "--threads",
            "2",
            "sample",
            "--data",
            p(&data),
            "--ops",
            "+,*",
            "--n-params",
            "2",
            "--steps",
            "100",
            "--temperatures",
            "3",
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0);
        let text = fs::read_to_string(out).unwrap();
        text.lines().skip(1).map(str::to_string).collect::<Vec<_>>()
    };
    assert_eq!(run("a.jsonl"), run("b.jsonl"));
}

#[test]
fn validate_equilibrium_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.csv");
    let report = dir.path().join("report.json");
    let o = bsr(&[
        "--seed",
        "2",
        "validate-equilibrium",
        "--steps",
        "20000",
        "--burn-in",
        "1000",
        "--threshold",
        "1.0",
        "--table",
        p(&table),
        "--report",
        p(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&table)
        .unwrap()
        .starts_with("expression,n_trees,exact,sampled"));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["report"]["n_trees"], 570);

    let o = bsr(&[
        "validate-equilibrium",
        "--steps",
        "2000",
        "--burn-in",
        "100",
        "--threshold",
        "0",
    ]);
    assert_eq!(code(&o), 3);
    let o = bsr(&["validate-equilibrium", "--steps", "100", "--burn-in", "100"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn fit_prior_from_statistics_table() {
    let dir = tempfile::tempdir().unwrap();
    let stats = dir.path().join("stats.tsv");
    fs::write(
        &stats,
        "op\tmean_count\tmean_sq_count\n+\t0.5\t0.8\n*\t0.7\t1.2\nsin\t0.1\t0.12\n",
    )
    .unwrap();
    let out = dir.path().join("prior.tsv");
    let o = bsr(&[
        "--seed",
        "3",
        "fit-prior",
        "--corpus",
        p(&stats),
        "--ops",
        "+,*,sin,exp",
        "--n-vars",
        "1",
        "--n-params",
        "1",
        "--batch-size",
        "500",
        "--max-sweeps",
        "5",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("n_vars=1"));
    let exp_line = text.lines().find(|l| l.starts_with("exp\t")).unwrap();
    assert_eq!(exp_line, "exp\t10\t0");
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(format!("{}.report.json", out.display())).unwrap(),
    )
    .unwrap();
    assert_eq!(report["report"]["sweeps"], 5);

    let data = generate_linear(dir.path(), "1");
    let trace = dir.path().join("t.jsonl");
    let o = bsr(&[
        "sample",
        "--data",
        p(&data),
        "--ops",
        "+,*,sin,exp",
        "--n-params",
        "1",
        "--prior-table",
        p(&out),
        "--steps",
        "20",
        "--temperatures",
        "2",
        "--out",
        p(&trace),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = bsr(&[
        "sample",
        "--data",
        p(&data),
        "--ops",
        "+,*",
        "--n-params",
        "2",
        "--prior-table",
        p(&out),
        "--steps",
        "20",
        "--out",
        p(&trace),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn config_file_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[equilibrium]\nn_steps = 3000\nburn_in = 100\nthreshold = 1.0\n",
    )
    .unwrap();
    let o = bsr(&["--config", p(&cfg), "validate-equilibrium"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("2900 recorded"));
    fs::write(&cfg, "[sampler]\nno_such_key = 1\n").unwrap();
    assert_eq!(
        code(&bsr(&["--config", p(&cfg), "validate-equilibrium"])),
        1
    );
}
