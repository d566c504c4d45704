use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lagrindex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lagrindex")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const FREE: &str = "tau = 1.0\n[family]\nname = \"free\"\nparams = { n = 2 }\n[grid]\nelements = 64\n";

const OSCILLATOR_SCAN: &str = r#"
tau = 3.141592653589793
[family]
name = "harmonic"
params = { omega = 0.0, omega_slope = 1.0 }
[grid]
elements = 128
lambda_min = 0.5
lambda_max = 3.5
lambda_points = 13
"#;

#[test]
fn demo_pendulum_reports_degeneracy_and_jump() {
    let o = lagrindex(&["demo", "pendulum"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("(m-, m0) = (1, 2)"), "{text}");
    assert!(text.contains("index jumps 1 -> 3"), "{text}");
}

#[test]
fn free_particle_index_is_trivial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "free.toml", FREE);
    let out = dir.path().join("out");
    let o = lagrindex(&["index", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("m- = 0, m0 = 0"));
    let csv = fs::read_to_string(out.join("index.csv")).unwrap();
    assert!(csv.contains("\nfem,0,0,64,"));
    assert!(csv.contains("\nfocal,0,0,64,"));
    assert!(csv.starts_with("# lagrindex: index\n# config_sha256: "));
}

#[test]
fn perturb_selftest_passes() {
    let o = lagrindex(&["perturb", "--selftest", "--trials", "100", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("100 of 100 trials passed"));
}

#[test]
fn scan_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scan.toml", OSCILLATOR_SCAN);
    let run = |sub: &str, svg: bool| {
        let out = dir.path().join(sub);
        let mut args = vec!["scan", "--config", &cfg, "--out", out.to_str().unwrap()];
        if svg {
            args.push("--svg");
        }
        let o = lagrindex(&args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", false);
    let b = run("b", true);
    let csv_a = fs::read(a.join("scan.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("scan.csv")).unwrap());
    assert_eq!(fs::read(a.join("candidates.toml")).unwrap(), fs::read(b.join("candidates.toml")).unwrap());
    assert!(!a.join("scan.svg").exists());
    assert!(fs::read_to_string(b.join("scan.svg")).unwrap().starts_with("<svg"));

    let text = String::from_utf8(csv_a).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "lambda,m_minus,m_null");
    assert_eq!(rows.len(), 14);
    // candidates at ω = 1, 2, 3
    let cands = fs::read_to_string(a.join("candidates.toml")).unwrap();
    assert_eq!(cands.matches("[[candidate]]").count(), 3);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "[family]\nname = \"nope\"\n");
    assert_eq!(lagrindex(&["index", "--config", &bad]).status.code(), Some(2));
    let free = write_config(dir.path(), "free.toml", FREE);
    assert_eq!(lagrindex(&["index", "--config", &free, "--grid", "8"]).status.code(), Some(2));
    assert_eq!(lagrindex(&["index"]).status.code(), Some(2));
    assert_eq!(lagrindex(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn solver_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    // focal instants need a point target
    let cfg = write_config(dir.path(), "p.toml", "[family]\nname = \"pendulum\"\n[boundary]\ntype = \"twist\"\n[grid]\nelements = 64\n");
    assert_eq!(lagrindex(&["focal", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn el_solve_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bvp.toml",
        "tau = 1.0\n[family]\nname = \"harmonic\"\n[boundary]\ntype = \"product\"\na0 = [0.0]\na1 = [1.0]\n[branch]\nkind = \"shoot\"\n[grid]\nelements = 64\n",
    );
    let out = dir.path().join("out");
    let o = lagrindex(&["el-solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('t'))
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 129);
    // q(t) = sin t / sin 1
    for r in &rows {
        assert!((r[1] - r[0].sin() / 1f64.sin()).abs() < 1e-6);
    }
}
