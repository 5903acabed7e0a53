//! End-to-end tests of the `evometric` binary: exit codes, report files,
//! determinism, and the subcommand surface.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_evometric"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).expect("write config");
    path
}

const SMALL_SYNTHETIC: &str = r#"
runs = 2
seed = 3

[synthetic]
classes = 2
d_v = 2
d_s = 4
d_n = 2
separation = 3.0
n_batches = 4
batch_size = 24

[hyperparams]
gamma = 0.05
lambda = 0.005
rho = 0.005
sigma = 0.1
rank_k = 8
inner_iters = 5

[triplets]
n_p = 3
n_q = 3
n_k = 3
triplets_per_batch = 6
rng_seed = 1
"#;

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).expect("read report");
    serde_json::from_str(&text).expect("parse report JSON")
}

#[test]
fn run_writes_report_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", SMALL_SYNTHETIC);
    let report = dir.path().join("out/report.json");
    let table = dir.path().join("out/table.tsv");

    let out = bin()
        .arg("run")
        .arg(&config)
        .args(["--report".as_ref(), report.as_os_str()])
        .args(["--table".as_ref(), table.as_os_str()])
        .output()
        .expect("spawn binary");
    assert!(
        out.status.success(),
        "run failed: {}\n{}",
        stdout(&out),
        stderr(&out)
    );

    let doc = json(&report);
    assert_eq!(doc["command"], "run");
    assert_eq!(doc["seeds"], serde_json::json!([3, 4]));
    let results = doc["results"].as_array().expect("results array");
    assert_eq!(results.len(), 1);
    assert_eq!(results[0]["variant"], "full");
    assert_eq!(results[0]["runs"], 2);
    assert!(results[0]["accuracy_mean"].as_f64().unwrap() >= 0.0);
    assert!(results[0]["accuracy_sd"].as_f64().unwrap() >= 0.0);
    assert_eq!(results[0]["per_run_accuracies"].as_array().unwrap().len(), 2);

    let table_text = std::fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = table_text.lines().collect();
    assert_eq!(lines.len(), 2, "header + one aggregated row:\n{table_text}");
    assert!(lines[0].starts_with("dataset\tn_i\tvariant"));
    assert!(lines[1].starts_with("synthetic\t24\tfull\t"));
}

#[test]
fn default_output_paths_sit_next_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", SMALL_SYNTHETIC);
    let out = bin().arg("run").arg(&config).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("exp.report.json").exists());
    assert!(dir.path().join("exp.table.tsv").exists());
}

#[test]
fn reruns_reproduce_report_files_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", SMALL_SYNTHETIC);
    let mut snapshots = Vec::new();
    for round in 0..2 {
        let report = dir.path().join(format!("r{round}.json"));
        let table = dir.path().join(format!("t{round}.tsv"));
        let out = bin()
            .arg("run")
            .arg(&config)
            .args(["--report".as_ref(), report.as_os_str()])
            .args(["--table".as_ref(), table.as_os_str()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        snapshots.push((
            std::fs::read(&report).unwrap(),
            std::fs::read(&table).unwrap(),
        ));
    }
    assert_eq!(snapshots[0].0, snapshots[1].0, "report files differ");
    assert_eq!(snapshots[0].1, snapshots[1].1, "table files differ");
}

#[test]
fn negative_gamma_fails_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", SMALL_SYNTHETIC);
    let out = bin()
        .arg("run")
        .arg(&config)
        .args(["--set", "hyperparams.gamma=-0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("gamma"), "message should name the key: {err}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "exp.toml",
        &format!("{SMALL_SYNTHETIC}\n[typo_section]\nx = 1\n"),
    );
    let out = bin().arg("run").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("typo_section"),
        "message should name the key: {}",
        stderr(&out)
    );

    let config2 = write_config(
        dir.path(),
        "exp2.toml",
        &SMALL_SYNTHETIC.replace("gamma = 0.05", "gamm = 0.05"),
    );
    let out2 = bin().arg("run").arg(config2).output().unwrap();
    assert_eq!(out2.status.code(), Some(1));
    assert!(stderr(&out2).contains("gamm"), "{}", stderr(&out2));
}

#[test]
fn numeric_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // Overlapping classes keep margins violated; an enormous step weight
    // then drives the closed-form update factor indefinite.
    let config = write_config(
        dir.path(),
        "exp.toml",
        &SMALL_SYNTHETIC
            .replace("separation = 3.0", "separation = 0.1")
            .replace("gamma = 0.05", "gamma = 400.0"),
    );
    let out = bin().arg("run").arg(&config).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "stdout: {} stderr: {}",
        stdout(&out),
        stderr(&out)
    );
    assert!(stderr(&out).contains("error"), "{}", stderr(&out));
}

#[test]
fn missing_config_file_exits_1() {
    let out = bin().arg("run").arg("/nonexistent/exp.toml").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ablate_emits_all_variants_with_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", SMALL_SYNTHETIC);
    let report = dir.path().join("report.json");
    let table = dir.path().join("table.tsv");
    let out = bin()
        .arg("ablate")
        .arg(&config)
        .args(["--report".as_ref(), report.as_os_str()])
        .args(["--table".as_ref(), table.as_os_str()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));

    let doc = json(&report);
    let results = doc["results"].as_array().unwrap();
    let tags: Vec<&str> = results.iter().map(|r| r["variant"].as_str().unwrap()).collect();
    assert_eq!(tags, vec!["full", "woT", "woI", "woW", "woLR"]);

    let full_mean = results[0]["accuracy_mean"].as_f64().unwrap();
    assert_eq!(results[0]["delta_vs_full"].as_f64().unwrap(), 0.0);
    for r in &results[1..] {
        let mean = r["accuracy_mean"].as_f64().unwrap();
        let delta = r["delta_vs_full"].as_f64().unwrap();
        assert!(
            (delta - (full_mean - mean)).abs() < 1e-12,
            "delta of {} should be full - variant",
            r["variant"]
        );
    }

    let table_text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(table_text.lines().count(), 6, "header + five variants");
}

#[test]
fn ablate_accepts_a_variant_subset() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", SMALL_SYNTHETIC);
    let report = dir.path().join("report.json");
    let out = bin()
        .arg("ablate")
        .arg(&config)
        .args(["--variants", "full,woW"])
        .args(["--report".as_ref(), report.as_os_str()])
        .args(["--table".as_ref(), dir.path().join("t.tsv").as_os_str()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let doc = json(&report);
    let tags: Vec<&str> = doc["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["variant"].as_str().unwrap())
        .collect();
    assert_eq!(tags, vec!["full", "woW"]);
}

#[test]
fn sweep_emits_one_row_per_grid_cell() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", SMALL_SYNTHETIC);
    let report = dir.path().join("report.json");
    let table = dir.path().join("table.tsv");
    let out = bin()
        .arg("sweep")
        .arg(&config)
        .args(["--gamma", "0.01,0.05"])
        .args(["--lambda", "0.001,0.01"])
        .args(["--report".as_ref(), report.as_os_str()])
        .args(["--table".as_ref(), table.as_os_str()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));

    let table_text = std::fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = table_text.lines().collect();
    assert_eq!(lines.len(), 5, "header + 2x2 grid:\n{table_text}");
    // Grid values echoed in the gamma/lambda columns, rho from the config.
    for (i, (g, l)) in [("0.01", "0.001"), ("0.01", "0.01"), ("0.05", "0.001"), ("0.05", "0.01")]
        .iter()
        .enumerate()
    {
        let cells: Vec<&str> = lines[i + 1].split('\t').collect();
        assert_eq!((&cells[3], &cells[4], &cells[5]), (g, l, &"0.005"));
    }
}

#[test]
fn degenerate_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", SMALL_SYNTHETIC);
    let run_report = dir.path().join("run.json");
    let sweep_report = dir.path().join("sweep.json");
    let t1 = dir.path().join("t1.tsv");
    let t2 = dir.path().join("t2.tsv");

    let out = bin()
        .arg("run")
        .arg(&config)
        .args(["--report".as_ref(), run_report.as_os_str()])
        .args(["--table".as_ref(), t1.as_os_str()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let out = bin()
        .arg("sweep")
        .arg(&config)
        .args(["--report".as_ref(), sweep_report.as_os_str()])
        .args(["--table".as_ref(), t2.as_os_str()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));

    let run_doc = json(&run_report);
    let sweep_doc = json(&sweep_report);
    assert_eq!(sweep_doc["results"].as_array().unwrap().len(), 1);
    assert_eq!(
        run_doc["results"][0]["accuracy_mean"],
        sweep_doc["results"][0]["accuracy_mean"],
        "a 1x1 sweep is the plain run"
    );
}

#[test]
fn multi_shot_config_reports_per_stage_accuracies() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "multi.toml",
        r#"
runs = 1
seed = 0

[scenario]
kind = "multi_shot"
task = "per_stage"
block_dims = [3, 4, 3]
batches_per_stage = 2

[synthetic]
classes = 2
separation = 6.0
batch_size = 24
n_batches = 4

[hyperparams]
gamma = 0.05
lambda = 0.005
rho = 0.005
sigma = 0.1
rank_k = 8
inner_iters = 5

[triplets]
n_p = 3
n_q = 3
n_k = 3
triplets_per_batch = 6
"#,
    );
    let report = dir.path().join("report.json");
    let out = bin()
        .arg("run")
        .arg(&config)
        .args(["--report".as_ref(), report.as_os_str()])
        .args(["--table".as_ref(), dir.path().join("t.tsv").as_os_str()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let doc = json(&report);
    let stages = doc["results"][0]["stage_accuracies"].as_array().unwrap();
    assert_eq!(stages.len(), 3, "three feature blocks give three stages");
}

#[test]
fn preset_runs_without_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .current_dir(dir.path())
        .arg("run")
        .args(["--preset", "separable3"])
        .args(["--set", "runs=1"])
        .args(["--set", "hyperparams.inner_iters=5"])
        .args(["--set", "synthetic.batch_size=30"])
        .args(["--set", "synthetic.n_batches=4"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("separable3.report.json").exists());
}

#[test]
fn datasets_lists_presets() {
    let out = bin().arg("datasets").output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    for name in ["separable3", "splice", "gisette", "mnist0vs5"] {
        assert!(text.contains(name), "missing '{name}' in:\n{text}");
    }
}

#[test]
fn worker_env_must_be_numeric() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", SMALL_SYNTHETIC);
    let out = bin()
        .env("EML_WORKERS", "many")
        .arg("run")
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("EML_WORKERS"), "{}", stderr(&out));

    let out = bin()
        .env("EML_WORKERS", "2")
        .arg("run")
        .arg(&config)
        .args(["--report".as_ref(), dir.path().join("r.json").as_os_str()])
        .args(["--table".as_ref(), dir.path().join("t.tsv").as_os_str()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
}
