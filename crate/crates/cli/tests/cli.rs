use std::fs;
use std::path::Path;
use std::process::Command;

fn adapt() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_adapt"));
    c.env_remove("ADAPT_WORKERS");
    c
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn small_benchmark_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let status = adapt()
        .args([
            "--nx",
            "11",
            "--ny",
            "11",
            "--t-begin",
            "0",
            "--t-end",
            "1",
            "--vtk",
            "--out",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for f in [
        "stats.csv",
        "summary.json",
        "mesh.txt",
        "metric.txt",
        "step_0000.vtk",
        "step_0001.vtk",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let csv = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    assert!(csv.starts_with("step,phase,seconds,n_verts,n_elems\n"));
    assert_eq!(summary(dir.path())["summary"]["steps"], 2);
}

#[test]
fn worker_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = adapt()
        .env("ADAPT_WORKERS", "3")
        .args(["--nx", "9", "--ny", "9", "--t-begin", "2", "--t-end", "2", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(summary(dir.path())["summary"]["n_workers"], 3);

    let status = adapt()
        .env("ADAPT_WORKERS", "3")
        .args([
            "--nx",
            "9",
            "--ny",
            "9",
            "--t-begin",
            "2",
            "--t-end",
            "2",
            "--workers",
            "2",
            "--out",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(summary(dir.path())["summary"]["n_workers"], 2);
}

#[test]
fn adapts_given_mesh_to_given_metric() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("in.mesh");
    let metric = dir.path().join("in.metric");
    // Unit square in two triangles, metric asking for edges of 0.25.
    fs::write(&mesh, "4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n").unwrap();
    fs::write(&metric, "16 0 16\n".repeat(4)).unwrap();
    let out = dir.path().join("out");
    let status = adapt()
        .arg("--mesh-in")
        .arg(&mesh)
        .arg("--metric-in")
        .arg(&metric)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = fs::read_to_string(out.join("mesh.txt")).unwrap();
    let header: Vec<usize> = text
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    assert!(header[1] > 2, "{header:?}");
    assert_eq!(summary(&out)["summary"]["steps"], 1);
}

#[test]
fn usage_and_io_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| {
        adapt()
            .args(args)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(code(&["--bogus"]), Some(1));
    assert_eq!(code(&["--nx", "many"]), Some(1));
    assert_eq!(code(&["--workers", "0", "--t-end", "0"]), Some(1));
    assert_eq!(code(&["--lmin", "1.5", "--t-end", "0"]), Some(1));
    assert_eq!(code(&["--mesh-in", "/nonexistent/mesh.txt"]), Some(1));
    assert_eq!(code(&["--metric-in", "m.txt"]), Some(1));
    assert_eq!(adapt().output().unwrap().status.code(), Some(1));

    let bad = dir.path().join("bad.mesh");
    fs::write(&bad, "3 1\n0 0\n1 0\n0 1\n0 1 7\n").unwrap();
    let out = adapt()
        .arg("--mesh-in")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vertex 7"));
}

#[test]
fn help_exits_zero() {
    let out = adapt().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--mesh-in"));
}
