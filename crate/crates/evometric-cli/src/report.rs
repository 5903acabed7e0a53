//! Report assembly: a JSON document with the full configuration echo and a
//! tab-separated table, one aggregated row per configuration cell.
//!
//! Both files are pure functions of the config and seeds; nothing
//! machine-dependent (timings, paths of the moment, thread counts) goes in.

use crate::config::RunConfig;
use crate::exec::Outcome;
use evometric::{Error, Result, VariantKind};
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct ReportDoc<'a> {
    command: &'a str,
    dataset: String,
    seeds: Vec<u64>,
    results: Vec<ResultEntry>,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct ResultEntry {
    variant: &'static str,
    gamma: f64,
    lambda: f64,
    rho: f64,
    runs: usize,
    accuracy_mean: f64,
    accuracy_sd: f64,
    per_run_accuracies: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage_accuracies: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_vs_full: Option<f64>,
}

/// Mean-accuracy difference against the `full` row of the same grid point,
/// present only when that row exists (ablation tables).
fn delta_vs_full(outcomes: &[Outcome], of: &Outcome) -> Option<f64> {
    if of.variant == VariantKind::Full {
        return outcomes
            .iter()
            .any(|o| o.variant != VariantKind::Full && o.grid == of.grid)
            .then_some(0.0);
    }
    outcomes
        .iter()
        .find(|o| o.variant == VariantKind::Full && o.grid == of.grid)
        .map(|full| full.report.accuracy_mean - of.report.accuracy_mean)
}

/// Renders the JSON report document.
pub fn render_report(command: &str, config: &RunConfig, outcomes: &[Outcome]) -> Result<String> {
    let seeds: Vec<u64> = (0..config.runs)
        .map(|i| config.seed.wrapping_add(i as u64))
        .collect();
    let results = outcomes
        .iter()
        .map(|o| ResultEntry {
            variant: o.variant.tag(),
            gamma: o.grid.gamma,
            lambda: o.grid.lambda,
            rho: o.grid.rho,
            runs: o.report.runs,
            accuracy_mean: o.report.accuracy_mean,
            accuracy_sd: o.report.accuracy_sd,
            per_run_accuracies: o.report.per_run_accuracies.clone(),
            stage_accuracies: o.report.stage_accuracies.clone(),
            delta_vs_full: delta_vs_full(outcomes, o),
        })
        .collect();
    let doc = ReportDoc {
        command,
        dataset: config.dataset_label(),
        seeds,
        results,
        config,
    };
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Validation(format!("report serialization: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Renders the flat table: one aggregated row per (dataset, n_i, variant,
/// grid point), tab-separated with a header line.
pub fn render_table(config: &RunConfig, outcomes: &[Outcome]) -> String {
    let mut out = String::from(
        "dataset\tn_i\tvariant\tgamma\tlambda\trho\truns\taccuracy_mean\taccuracy_sd\tdelta_vs_full\n",
    );
    let label = config.dataset_label();
    let n_i = config.batch_size();
    for o in outcomes {
        let delta = delta_vs_full(outcomes, o)
            .map(|d| format!("{d:.6}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{label}\t{n_i}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{delta}\n",
            o.variant.tag(),
            o.grid.gamma,
            o.grid.lambda,
            o.grid.rho,
            o.report.runs,
            o.report.accuracy_mean,
            o.report.accuracy_sd,
        ));
    }
    out
}

/// Per-stage wall-clock summary; stdout only, never part of report files.
pub fn render_timings(outcomes: &[Outcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        out.push_str(&format!(
            "timing {}: transforming {:.2}s, inheriting {:.2}s, scoring {:.2}s\n",
            o.variant.tag(),
            o.report.timings.tstage,
            o.report.timings.istage,
            o.report.timings.eval
        ));
    }
    out
}

/// Writes both files, creating parent directories as needed.
pub fn write_outputs(
    report_path: &Path,
    table_path: &Path,
    report: &str,
    table: &str,
) -> Result<()> {
    for (path, text) in [(report_path, report), (table_path, table)] {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, text)?;
    }
    Ok(())
}
