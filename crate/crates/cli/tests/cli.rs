use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_CONFIG: &str =
    r#"{"n_users": 4, "items_per_iteration": 3, "n_iterations": 4, "seed": 3}"#;

fn bubblesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bubblesim"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn bubblesim")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Temp dir with a 500-item catalog and a small config.
struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Workspace {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace { dir };
        let out = bubblesim(&[
            "fixture",
            "--seed",
            "7",
            "--n-items",
            "500",
            "--out",
            p(&ws.catalog()),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        fs::write(ws.config(), SMALL_CONFIG).unwrap();
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn catalog(&self) -> PathBuf {
        self.path("catalog.jsonl")
    }

    fn config(&self) -> PathBuf {
        self.path("config.json")
    }

    fn run(&self, out: &str) -> Output {
        bubblesim(&[
            "run",
            "--config",
            p(&self.config()),
            "--catalog",
            p(&self.catalog()),
            "--out",
            p(&self.path(out)),
        ])
    }
}

#[test]
fn run_writes_a_complete_run_directory() {
    let ws = Workspace::new();
    let out = ws.run("run");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let dir = ws.path("run");
    for file in [
        "config.json",
        "profiles.jsonl",
        "records.jsonl",
        "slates.jsonl",
        "catalog.jsonl",
        "metrics.csv",
        "summary.csv",
    ] {
        assert!(dir.join(file).exists(), "{file} missing");
    }
    assert!(!dir.join("INCOMPLETE").exists());

    // Header, one line per iteration, then the run directory line.
    let text = stdout(&out);
    let iteration_lines = text
        .lines()
        .filter(|l| {
            l.trim_start()
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_digit())
        })
        .count();
    assert_eq!(iteration_lines, 4, "{text}");

    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4 * 3);
}

#[test]
fn rerun_is_byte_identical() {
    let ws = Workspace::new();
    assert_eq!(ws.run("a").status.code(), Some(0));
    assert_eq!(ws.run("b").status.code(), Some(0));
    for file in ["metrics.csv", "records.jsonl", "slates.jsonl"] {
        assert_eq!(
            fs::read(ws.path("a").join(file)).unwrap(),
            fs::read(ws.path("b").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn missing_config_is_a_usage_error() {
    let ws = Workspace::new();
    let out = bubblesim(&[
        "run",
        "--config",
        p(&ws.path("nope.json")),
        "--catalog",
        p(&ws.catalog()),
        "--out",
        p(&ws.path("run")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!ws.path("run").exists());
}

#[test]
fn invalid_config_is_a_usage_error() {
    let ws = Workspace::new();
    fs::write(ws.config(), r#"{"cscmr": 33}"#).unwrap();
    assert_eq!(ws.run("run").status.code(), Some(1));
}

#[test]
fn non_empty_output_directory_is_refused() {
    let ws = Workspace::new();
    fs::create_dir(ws.path("run")).unwrap();
    fs::write(ws.path("run/keep.txt"), "x").unwrap();
    assert_eq!(ws.run("run").status.code(), Some(1));
    assert_eq!(fs::read_to_string(ws.path("run/keep.txt")).unwrap(), "x");
}

#[test]
fn catalog_too_small_is_a_runtime_failure_with_sentinel() {
    let ws = Workspace::new();
    fs::write(
        ws.config(),
        r#"{"n_users": 4, "items_per_iteration": 5, "n_iterations": 200}"#,
    )
    .unwrap();
    let out = ws.run("run");
    assert_eq!(out.status.code(), Some(2));
    assert!(ws.path("run/INCOMPLETE").exists());
}

#[test]
fn help_and_usage_errors() {
    let help = bubblesim(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = stdout(&help);
    for name in [
        "BUBBLESIM_API_KEY",
        "BUBBLESIM_LLM_BASE_URL",
        "BUBBLESIM_LLM_MODEL",
    ] {
        assert!(text.contains(name), "--help does not mention {name}");
    }
    assert_eq!(bubblesim(&["--version"]).status.code(), Some(0));
    assert_eq!(bubblesim(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bubblesim(&[]).status.code(), Some(1));
}

#[test]
fn sweep_writes_one_directory_per_value_and_seed() {
    let ws = Workspace::new();
    let out_dir = ws.path("sweep");
    let out = bubblesim(&[
        "sweep",
        "--config",
        p(&ws.config()),
        "--catalog",
        p(&ws.catalog()),
        "--out",
        p(&out_dir),
        "--axis",
        "cscmr",
        "--values",
        "0,25,50,75,100",
        "--seeds",
        "1,2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let mut runs = 0;
    for value in ["0", "25", "50", "75", "100"] {
        for seed in [1, 2] {
            let dir = out_dir.join(format!("cscmr={value}/seed={seed}"));
            assert!(dir.join("metrics.csv").exists(), "{}", dir.display());
            runs += 1;
        }
    }
    assert_eq!(runs, 10);
    let summary = fs::read_to_string(out_dir.join("sweep_summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "axis_value,seed,iteration,mean_entropy_l1,mean_entropy_l2,mean_entropy_l3,\
         mean_satisfaction,bubble_l1,bubble_l2,bubble_l3"
    );
    assert_eq!(lines.count(), 5 * 2 * 4);
    assert!(out_dir.join("sweep_aggregate.csv").exists());
}

#[test]
fn sweep_rejects_an_unknown_axis() {
    let ws = Workspace::new();
    let out = bubblesim(&[
        "sweep",
        "--config",
        p(&ws.config()),
        "--catalog",
        p(&ws.catalog()),
        "--out",
        p(&ws.path("sweep")),
        "--axis",
        "colour",
        "--values",
        "red",
        "--seeds",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!ws.path("sweep").exists());
}

#[test]
fn metrics_recompute_matches_and_flags_a_different_window() {
    let ws = Workspace::new();
    assert_eq!(ws.run("run").status.code(), Some(0));
    let run = ws.path("run");

    let same = bubblesim(&["metrics", "--run", p(&run)]);
    assert_eq!(same.status.code(), Some(0), "{}", stderr(&same));
    assert_eq!(
        fs::read(run.join("metrics.recomputed.csv")).unwrap(),
        fs::read(run.join("metrics.csv")).unwrap()
    );

    let flipped_out = ws.path("cumulative.csv");
    let flipped = bubblesim(&[
        "metrics",
        "--run",
        p(&run),
        "--window",
        "cumulative",
        "--out",
        p(&flipped_out),
    ]);
    assert_eq!(flipped.status.code(), Some(0), "{}", stderr(&flipped));
    let text = fs::read_to_string(&flipped_out).unwrap();
    assert!(text.starts_with("# window=cumulative"), "{text}");
    let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    assert_ne!(body, fs::read_to_string(run.join("metrics.csv")).unwrap());
}

#[test]
fn metrics_on_truncated_log_is_a_runtime_failure() {
    let ws = Workspace::new();
    assert_eq!(ws.run("run").status.code(), Some(0));
    let records = ws.path("run/records.jsonl");
    let text = fs::read_to_string(&records).unwrap();
    let lines = text.lines().count();
    fs::write(&records, &text[..text.len() - 15]).unwrap();
    let out = bubblesim(&["metrics", "--run", p(&ws.path("run"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains(&format!("records.jsonl:{lines}")),
        "{}",
        stderr(&out)
    );
}

#[test]
fn ecdf_export_has_one_curve_per_group() {
    let ws = Workspace::new();
    assert_eq!(ws.run("run").status.code(), Some(0));
    let csv = ws.path("ecdf.csv");
    let out = bubblesim(&[
        "ecdf",
        "--run",
        p(&ws.path("run")),
        "--feature",
        "gender",
        "--out",
        p(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "feature,group,value,fraction");
    // Every group's curve ends at 1.
    let mut last: std::collections::BTreeMap<String, String> = Default::default();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        last.insert(cols[1].to_string(), cols[3].to_string());
    }
    assert!(!last.is_empty());
    assert!(last.values().all(|f| f == "1.0"), "{last:?}");

    let bad = bubblesim(&[
        "ecdf",
        "--run",
        p(&ws.path("run")),
        "--feature",
        "height",
        "--out",
        p(&csv),
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn fixture_rejects_a_bad_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = bubblesim(&[
        "fixture",
        "--shape",
        "many",
        "--out",
        p(&dir.path().join("c.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
