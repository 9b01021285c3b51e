use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nhic_lab::{list_tasks, run, ExperimentConfig, TaskKind};
use tempfile::TempDir;

const PENDULUM_WELL: &str = r#"
task = "period-law"
seed = 3

[system.chart]
constant = 1.25
potential = [
  { index = [1, 0], cos = -1.0 },
  { index = [0, 1], cos = -0.25 },
]

[numeric]
energies = { min = 1e-5, max = 1e-2, count = 6 }
"#;

fn nhic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_file(config: &Path, out: &Path) -> Output {
    nhic(&[
        "run",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

fn files_with_extension(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

#[test]
fn sigma_out_of_range_is_a_line_precise_error() {
    let dir = TempDir::new().unwrap();
    let text = format!("{PENDULUM_WELL}sigma = 0.9\n");
    let line = text.lines().position(|l| l.starts_with("sigma")).unwrap() + 1;
    let cfg = write_config(&dir, "bad.toml", &text);
    let out = run_file(&cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("sigma = 0.9"), "{err}");
    assert!(err.contains("(0, 1/2)"), "{err}");
    assert!(err.contains(&format!("line {line}")), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let text = PENDULUM_WELL.replace("seed = 3", "seed = 3\nspeed = 4");
    let err = ExperimentConfig::parse(&text, "inline")
        .unwrap_err()
        .to_string();
    assert!(err.contains("unknown field `speed`"), "{err}");
    let nested = PENDULUM_WELL.replace("constant = 1.25", "constant = 1.25\nmass = 2.0");
    assert!(ExperimentConfig::parse(&nested, "inline").is_err());
}

#[test]
fn missing_required_key_names_it() {
    let text = PENDULUM_WELL.replace("energies = { min = 1e-5, max = 1e-2, count = 6 }", "");
    let err = ExperimentConfig::parse(&text, "inline")
        .unwrap_err()
        .to_string();
    assert!(err.contains("numeric.energies"), "{err}");
}

#[test]
fn catalog_lists_every_task_alphabetically() {
    let entries = list_tasks();
    assert_eq!(entries.len(), 10);
    let names: Vec<String> = entries.iter().map(|e| e.task.to_string()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    for kind in TaskKind::ALL {
        assert!(names.contains(&kind.to_string()));
    }
    assert!(entries
        .iter()
        .all(|e| !e.required.is_empty() && !e.description.is_empty()));
}

#[test]
fn catalog_json_is_valid() {
    let out = nhic(&["tasks", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let entries = v.as_array().unwrap();
    assert_eq!(entries.len(), 10);
    assert_eq!(entries[0]["task"], "bifurcations");
    assert!(entries
        .iter()
        .all(|e| e["required"].as_array().is_some_and(|r| !r.is_empty())));
}

#[test]
fn normalized_config_round_trips() {
    let cfg = ExperimentConfig::parse(PENDULUM_WELL, "inline").unwrap();
    let norm = cfg.normalized();
    let again = ExperimentConfig::parse(&norm.to_toml(), "normalized").unwrap();
    assert_eq!(again, norm);
    assert_eq!(again.normalized(), norm);
}

#[test]
fn period_law_run_writes_report_table_and_fit_plot() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "period.toml", PENDULUM_WELL);
    let out_dir = dir.path().join("out");
    let out = run_file(&cfg, &out_dir);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("PASS period-law"));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["task"], "period-law");
    assert_eq!(report["seed"], 3);
    assert_eq!(report["passed"], true);
    let slope = report["summary"]["law"]["slope"].as_f64().unwrap();
    assert!((slope - 1.0).abs() < 0.02, "{slope}");
    let echoed = toml::to_string(&report["config"]).unwrap();
    ExperimentConfig::parse(&echoed, "echo").unwrap();

    let svgs = files_with_extension(&out_dir, "svg");
    assert_eq!(svgs, vec![out_dir.join("period.svg")]);
    let svg = fs::read_to_string(&svgs[0]).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(!svg.contains("href"));
    assert!(!svg.contains("<image"));
    assert!(svg.contains("<polyline"));
    assert!(svg.contains("fit, slope"));
    assert_eq!(
        files_with_extension(&out_dir, "csv"),
        vec![out_dir.join("period.csv")]
    );
}

#[test]
fn empty_plot_list_writes_no_svg() {
    let dir = TempDir::new().unwrap();
    let text = PENDULUM_WELL.replace("seed = 3", "seed = 3\nplots = []");
    let cfg = ExperimentConfig::parse(&text, "inline").unwrap();
    let report = run(&cfg, dir.path()).unwrap();
    assert!(report.passed);
    assert!(report.plots.is_empty());
    assert!(files_with_extension(dir.path(), "svg").is_empty());
}

#[test]
fn unsupported_plot_is_rejected() {
    let text = PENDULUM_WELL.replace("seed = 3", "seed = 3\nplots = [\"alpha\"]");
    let err = ExperimentConfig::parse(&text, "inline")
        .unwrap_err()
        .to_string();
    assert!(err.contains("alpha"), "{err}");
}

#[test]
fn same_seed_gives_identical_csv_bytes() {
    let dir = TempDir::new().unwrap();
    let text = r#"
task = "normal-form"
seed = 11

[numeric]
trials = 8
completions = 12
"#;
    let cfg = write_config(&dir, "nf.toml", text);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run_file(&cfg, &a).status.code(), Some(0));
    assert_eq!(run_file(&cfg, &b).status.code(), Some(0));
    let csv_a = files_with_extension(&a, "csv");
    assert!(!csv_a.is_empty());
    for p in &csv_a {
        let q = b.join(p.file_name().unwrap());
        assert_eq!(fs::read(p).unwrap(), fs::read(q).unwrap());
    }

    let c = dir.path().join("c");
    let out = nhic(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
        "--seed",
        "12",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(
        fs::read(a.join("homological.csv")).unwrap(),
        fs::read(c.join("homological.csv")).unwrap()
    );
}

#[test]
fn failed_verdict_exits_2() {
    let dir = TempDir::new().unwrap();
    let text = PENDULUM_WELL.replace("period-law", "floquet") + "predicted = 3.0\n";
    let cfg = write_config(&dir, "floquet.toml", &text);
    let out = run_file(&cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("FAIL floquet-ratio"));
}

#[test]
fn seed_beyond_toml_integers_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "period.toml", PENDULUM_WELL);
    let unused = dir.path().join("unused");
    let out = nhic(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        unused.to_str().unwrap(),
        "--seed",
        "9223372036854775808",
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(!unused.exists());
}

#[test]
fn missing_file_exits_1() {
    let dir = TempDir::new().unwrap();
    let out = run_file(&dir.path().join("absent.toml"), &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}
