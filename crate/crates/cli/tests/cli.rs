//! End-to-end runs of the `cloudprice` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cloudprice::reference;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cloudprice"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_instance(dir: &Path, name: &str, json: String) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn clustered(dir: &TempDir) -> String {
    write_instance(dir.path(), "clustered.json", reference::clustered_instance().to_json())
        .to_str()
        .unwrap()
        .to_string()
}

/// Three well separated job groups, one task per job over two intervals.
fn write_trace(dir: &Path) -> PathBuf {
    let mut csv = String::from("time,job_id,task_id,cpu,mem\n");
    let centers = [(0.1, 0.1), (0.5, 0.2), (0.2, 0.6)];
    for job in 0..60 {
        let (cpu, mem) = centers[job % 3];
        let wiggle = 1.0 + 0.01 * (job % 7) as f64;
        for t in 0..2 {
            csv += &format!("{t},job{job},task0,{},{}\n", cpu * wiggle / 2.0, mem * wiggle / 2.0);
        }
    }
    let path = dir.join("trace.csv");
    fs::write(&path, csv).unwrap();
    path
}

#[test]
fn optimize_prints_the_toy_optimum() {
    let dir = TempDir::new().unwrap();
    let inst = write_instance(dir.path(), "toy.json", reference::single_type_instance().to_json());
    let out = run(&[
        "optimize",
        "--instance",
        inst.to_str().unwrap(),
        "--plan",
        "differentiated",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("prices: 0.500000"), "{text}");
    assert!(text.contains("revenue: 2.000000"), "{text}");
}

#[test]
fn missing_instance_exits_with_input_error() {
    let out = run(&["optimize", "--instance", "/nonexistent/instance.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("instance"));
}

#[test]
fn malformed_instance_names_the_field() {
    let dir = TempDir::new().unwrap();
    let json = reference::clustered_instance()
        .to_json()
        .replace("\"capacity\": 6.0", "\"capacity\": -6.0");
    let inst = write_instance(dir.path(), "bad.json", json);
    let out = run(&["optimize", "--instance", inst.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("capacit"));
}

#[test]
fn bad_flag_is_an_input_error() {
    assert_eq!(run(&["optimize", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn bundled_price_ignores_the_revenue_weight() {
    let dir = TempDir::new().unwrap();
    let inst = clustered(&dir);
    let price = |nu: &str| {
        let out = run(&["optimize", "--instance", &inst, "--plan", "bundled", "--nu", nu]);
        assert!(out.status.success());
        stdout(&out)
            .lines()
            .find(|l| l.starts_with("prices:"))
            .unwrap()
            .to_string()
    };
    let base = price("0");
    assert_eq!(price("1"), base);
    assert_eq!(price("100"), base);
}

#[test]
fn optimize_writes_json() {
    let dir = TempDir::new().unwrap();
    let inst = clustered(&dir);
    let json = dir.path().join("result.json");
    let out = run(&["optimize", "--instance", &inst, "--out", json.to_str().unwrap()]);
    assert!(out.status.success());
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(value["converged"], serde_json::Value::Bool(true));
}

#[test]
fn sweep_writes_one_row_per_point_weight_and_plan() {
    let dir = TempDir::new().unwrap();
    let inst = clustered(&dir);
    let (csv, svg) = (dir.path().join("sweep.csv"), dir.path().join("sweep.svg"));
    let out = run(&[
        "sweep",
        "--instance",
        &inst,
        "--parameter",
        "capacity:mem",
        "--start",
        "2",
        "--stop",
        "8",
        "--steps",
        "4",
        "--nu",
        "0,1",
        "--out",
        csv.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 2 * 3);
    let chart = fs::read_to_string(svg).unwrap();
    assert!(chart.starts_with("<svg") || chart.starts_with("<?xml"));
    assert!(chart.trim_end().ends_with("</svg>"));
    assert!(!chart.contains("href"));
}

#[test]
fn ingest_is_reproducible_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let trace = write_trace(dir.path());
    let ingest = |name: &str| {
        let out_path = dir.path().join(name);
        let out = run(&[
            "ingest",
            "--trace",
            trace.to_str().unwrap(),
            "--k",
            "3",
            "--seed",
            "7",
            "--k-std",
            "3",
            "--capacities",
            "6,6",
            "--alphas",
            "0.5,0.5,0.5",
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (fs::read(out_path).unwrap(), out.stdout)
    };
    let (a, b) = (ingest("a.json"), ingest("b.json"));
    assert_eq!(a, b);
    let text = String::from_utf8_lossy(&a.1);
    assert!(text.contains("jobs: 60"), "{text}");
}

#[test]
fn verify_passes_and_detects_injected_faults() {
    let ok = run(&["verify", "--scope", "demand", "--scope", "bounds"]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    assert!(stdout(&ok).contains(" 0 failed"));
    let broken = run(&["verify", "--scope", "demand", "--break-demand"]);
    assert_eq!(broken.status.code(), Some(1));
    assert!(stdout(&broken).contains("FAIL"));
}

#[test]
fn unknown_scope_is_rejected() {
    assert_eq!(run(&["verify", "--scope", "nonsense"]).status.code(), Some(1));
}

#[test]
fn schedule_reports_idle_intervals() {
    let dir = TempDir::new().unwrap();
    let toy: serde_json::Value = serde_json::from_str(&reference::single_type_instance().to_json()).unwrap();
    let horizon = serde_json::json!({
        "horizon": 2,
        "intervals": [
            { "instance": toy, "deadlines": [1], "nu": 1.0 },
            { "resources": toy["resources"] }
        ]
    });
    let path = dir.path().join("horizon.json");
    fs::write(&path, horizon.to_string()).unwrap();
    let out = run(&["schedule", "--horizon", path.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}{}",
        stdout(&out),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("interval 2: no arrivals"), "{}", stdout(&out));
}
