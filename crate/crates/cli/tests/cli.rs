use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qudit-learn"))
        .args(args)
        .env("QUDIT_DATA_DIR", data_dir())
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
kind = "method_compare"
seed = 3
[dataset]
name = "iris"
[model]
dims = [2, 3]
methods = ["implicit", "explicit"]
restarts = 2
[model.optimizer]
kind = "adam"
max_epochs = 10
"#;

#[test]
fn run_writes_results_and_reproduces_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let a = cli(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out_a.to_str().unwrap(),
        "--jobs",
        "1",
    ]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = cli(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out_b.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(b.status.success());
    let rows_a = fs::read(out_a.join("rows.csv")).unwrap();
    assert_eq!(rows_a, fs::read(out_b.join("rows.csv")).unwrap());
    assert_eq!(String::from_utf8(rows_a).unwrap().lines().count(), 1 + 8);
    let json = fs::read_to_string(out_a.join("results.json")).unwrap();
    assert!(json.contains("\"config\""));
    assert!(json.contains("\"library_version\""));
    let stdout = String::from_utf8_lossy(&a.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("d=")).count(), 4);
}

#[test]
fn seed_flag_changes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(
        cli(&["run", "--config", &cfg, "--out", a.to_str().unwrap()])
            .status
            .success()
    );
    assert!(cli(&[
        "run",
        "--config",
        &cfg,
        "--out",
        b.to_str().unwrap(),
        "--seed",
        "99"
    ])
    .status
    .success());
    assert_ne!(
        fs::read(a.join("rows.csv")).unwrap(),
        fs::read(b.join("rows.csv")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "kind = \"train_eval\"\nwhat = 1\n");
    assert_eq!(
        cli(&["validate-config", "--config", &bad]).status.code(),
        Some(2)
    );
    assert_eq!(
        cli(&["run", "--config", "/does/not/exist.toml"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(cli(&["run"]).status.code(), Some(2));

    let broken = write(
        dir.path(),
        "iris.csv",
        "sl,sw,pl,pw,class\n1,2,3,x,setosa\n",
    );
    let cfg = write(
        dir.path(),
        "d.toml",
        &format!("kind = \"train_eval\"\n[dataset]\nname = \"iris\"\npath = \"{broken}\"\n"),
    );
    let out = cli(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let good = write(dir.path(), "g.toml", SMALL);
    let ok = cli(&["validate-config", "--config", &good]);
    assert!(ok.status.success());
}

#[test]
fn mos_subcommand_writes_set_and_gram() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mos");
    let r = cli(&[
        "mos",
        "--dim",
        "2",
        "--states",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = fs::read_to_string(out.join("mos.txt")).unwrap();
    assert!(text.contains("K = 3"));
    let gram = fs::read_to_string(out.join("gram.csv")).unwrap();
    let rows: Vec<Vec<f64>> = gram
        .lines()
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for (i, row) in rows.iter().enumerate() {
        for (j, g) in row.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.5 };
            assert!((g - want).abs() < 0.02, "gram[{i}][{j}] = {g}");
        }
    }
}

#[test]
fn bloch_export_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "b.toml",
        "kind = \"train_eval\"\n[dataset]\nname = \"iris\"\n[model]\ndims = [2]\nrestarts = 1\n[model.optimizer]\nkind = \"adam\"\nmax_epochs = 5\n",
    );
    let out = dir.path().join("bloch.csv");
    let r = cli(&[
        "bloch-export",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(
        lines.iter().filter(|l| l.starts_with("point,")).count(),
        120
    );
    assert_eq!(lines.iter().filter(|l| l.starts_with("center,")).count(), 3);
    for l in &lines {
        let v: Vec<f64> = l.split(',').skip(3).map(|c| c.parse().unwrap()).collect();
        let r2: f64 = v.iter().map(|x| x * x).sum();
        assert!((r2 - 1.0).abs() < 1e-9);
    }
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let r = cli(&["validate-config", "--config", path.to_str().unwrap()]);
        assert!(
            r.status.success(),
            "{}: {}",
            path.display(),
            String::from_utf8_lossy(&r.stderr)
        );
        n += 1;
    }
    assert!(n >= 6);
}
