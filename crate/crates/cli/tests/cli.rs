use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const REFERENCE_PARAMS: &str = "[params]\nv0 = 5.0\nforce = 0.25\ng = 0.25\n";

fn wschaos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wschaos")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

fn run_in(dir: &Path, body: &str, args: &[&str]) -> (Output, PathBuf) {
    let cfg = write_config(dir, body);
    let out = dir.join("out");
    let mut full = args.to_vec();
    full.extend(["-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    (wschaos(&full), out)
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), String::from_utf8_lossy(&o.stderr));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../examples").join(name).join("config.toml")
}

#[test]
fn basis_report_lists_the_on_site_coupling() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_in(tmp.path(), REFERENCE_PARAMS, &["basis"]);
    ok(&o);
    let report = fs::read_to_string(out.join("chi_report.txt")).unwrap();
    let line = report.lines().find(|l| l.starts_with("chi_000 ")).expect("chi_000 line");
    let value: f64 = line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!((value - 1.99).abs() < 0.02, "{line}");
    assert!(out.join("basis.json").exists() && out.join("chi.csv").exists());
}

#[test]
fn shallow_lattice_fails_numerically() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, _) = run_in(tmp.path(), "[params]\nv0 = 0.1\nforce = 0.25\ng = 0.25\n", &["basis"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&o.stderr).to_lowercase();
    assert!(msg.contains("localized"), "{msg}");
}

#[test]
fn rerun_reproduces_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let hashes = |out: &Path| -> Value {
        let m: Value = serde_json::from_str(&fs::read_to_string(out.join("basis.manifest.json")).unwrap()).unwrap();
        m["files"].clone()
    };
    let (o, out) = run_in(tmp.path(), REFERENCE_PARAMS, &["basis"]);
    ok(&o);
    let first = hashes(&out);
    let chi = fs::read(out.join("chi.csv")).unwrap();
    fs::remove_dir_all(&out).unwrap();
    let (o, out) = run_in(tmp.path(), REFERENCE_PARAMS, &["basis"]);
    ok(&o);
    assert_eq!(first, hashes(&out));
    assert_eq!(chi, fs::read(out.join("chi.csv")).unwrap());
}

#[test]
fn zero_horizon_keeps_only_the_initial_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("{REFERENCE_PARAMS}[run]\nhorizon = 0.0\n");
    let (o, out) = run_in(tmp.path(), &body, &["evolve", "--solver", "model"]);
    ok(&o);
    let rows = csv_rows(&out.join("trajectory_model.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn both_solvers_write_a_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = example("fig2");
    let out = tmp.path().join("out");
    let o = wschaos(&[
        "evolve",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--set",
        "run.horizon=5.0",
        "--set",
        "run.samples=11",
    ]);
    ok(&o);
    let header = fs::read_to_string(out.join("trajectory_gpe.csv")).unwrap();
    let header = header.lines().next().unwrap();
    for col in ["I_-1", "I_0", "I_1", "completeness"] {
        assert!(header.split(',').any(|c| c == col), "{header}");
    }
    let rows = csv_rows(&out.join("comparison.csv"));
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["-1", "0", "1"]);
    for r in &rows {
        assert!(r[1].parse::<f64>().unwrap() < 0.05);
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("evolve.manifest.json")).unwrap()).unwrap();
    let logged: Vec<&str> = manifest["overrides"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(logged.contains(&"run.horizon=5.0"));

    // the comparison subcommand agrees with the report written by evolve
    let report = tmp.path().join("report.json");
    let o = wschaos(&[
        "compare",
        out.join("trajectory_model.csv").to_str().unwrap(),
        out.join("trajectory_gpe.csv").to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    ok(&o);
    let r: Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    for (k, row) in rows.iter().enumerate() {
        let a = r["rms"][k].as_f64().unwrap();
        let b: f64 = row[1].parse().unwrap();
        assert!((a - b).abs() <= 1e-12 * b.max(1e-300), "{a} vs {b}");
    }
}

#[test]
fn section_writes_one_row_per_crossing() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("{REFERENCE_PARAMS}[section.spec]\nmax_crossings = 20\n[section.launches]\ncount = 3\n");
    let (o, out) = run_in(tmp.path(), &body, &["section"]);
    ok(&o);
    let orbits = csv_rows(&out.join("orbits.csv"));
    assert_eq!(orbits.len(), 3);
    let points = csv_rows(&out.join("section.csv"));
    let total: usize = orbits.iter().map(|r| r[1].parse::<usize>().unwrap()).sum();
    assert_eq!(points.len(), total);
    assert!(out.join("orbits").read_dir().unwrap().count() == 3);
}

#[test]
fn decoupled_lyapunov_map_is_regular() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("{REFERENCE_PARAMS}[lyapunov]\ncoupling_scale = 0.0\n[lyapunov.launches]\ncount = 5\n");
    let (o, out) = run_in(tmp.path(), &body, &["lyapunov"]);
    ok(&o);
    let rows = csv_rows(&out.join("lyapunov.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[3] == "regular"), "{rows:?}");
}

#[test]
fn main_resonance_row() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_in(tmp.path(), REFERENCE_PARAMS, &["resonances"]);
    ok(&o);
    let rows = csv_rows(&out.join("resonances.csv"));
    let main = rows.iter().find(|r| r[0] == "ratio" && r[1] == "1" && r[2] == "1").expect("1:1 row");
    let i0: f64 = main[5].parse().unwrap();
    assert!((i0 - 0.701).abs() < 5e-3, "{i0}");
}

#[test]
fn malformed_configs_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    for body in ["[params]\nv0 = 5.0\n", "not toml at all [", &format!("{REFERENCE_PARAMS}[run]\nunknown = 1\n")] {
        let (o, _) = run_in(tmp.path(), body, &["basis"]);
        assert_eq!(o.status.code(), Some(1), "{body}");
    }
    let o = wschaos(&["basis", "-c", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(wschaos(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn shipped_examples_parse() {
    for name in ["fig1", "fig2", "fig3"] {
        let text = fs::read_to_string(example(name)).unwrap();
        let cfg = wschaos_cli::config::RunConfig::from_toml(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(cfg.model_params().unwrap().v0, 5.0);
    }
    let fig3 = wschaos_cli::config::RunConfig::from_toml(&fs::read_to_string(example("fig3")).unwrap()).unwrap();
    assert!(fig3.section.launches.values().len() >= 30);
}
