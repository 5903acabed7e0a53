//! `evometric`: run metric-learning experiments over evolving-feature
//! streams from TOML configs, with ablations, hyperparameter sweeps, and
//! reproducible report files.

mod config;
mod exec;
mod report;

use clap::{Args, Parser, Subcommand};
use config::{load_config, preset_config, synthetic_presets, RunConfig};
use evometric::{dataset_presets, Error, Result, VariantKind};
use exec::{execute, GridPoint, WORKERS_ENV};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "evometric",
    version,
    about = "Metric learning for data streams whose features vanish and appear",
    after_help = format!(
        "Worker pool size comes from {WORKERS_ENV} (default: one per core).\n\
         Exit codes: 0 success, 1 invalid input, 2 numerical failure."
    )
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write report files.
    Run(RunArgs),
    /// Run several pipeline variants under identical seeds and compare.
    Ablate(AblateArgs),
    /// Run a Cartesian grid over the loss weights gamma, lambda, rho.
    Sweep(SweepArgs),
    /// List built-in synthetic families and dataset presets.
    Datasets,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(value_name = "CONFIG", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Start from a built-in synthetic family instead of a file.
    #[arg(long, value_name = "NAME", conflicts_with = "config")]
    preset: Option<String>,
    /// Override one config key, e.g. --set hyperparams.gamma=0.05
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Report document destination (default: next to the config).
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// Flat table destination (default: next to the config).
    #[arg(long, value_name = "PATH")]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated variants (full, woT, woI, woW, woLR); all five by
    /// default.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    variants: Vec<VariantKind>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated gamma values (default: the configured gamma).
    #[arg(long, value_name = "LIST", value_delimiter = ',', allow_hyphen_values = true)]
    gamma: Vec<f64>,
    /// Comma-separated lambda values (default: the configured lambda).
    #[arg(long, value_name = "LIST", value_delimiter = ',', allow_hyphen_values = true)]
    lambda: Vec<f64>,
    /// Comma-separated rho values (default: the configured rho).
    #[arg(long, value_name = "LIST", value_delimiter = ',', allow_hyphen_values = true)]
    rho: Vec<f64>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; everything else is
            // bad input.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = resolve_config(&args.common)?;
            let outcomes = execute(&config, &[VariantKind::Full], &[GridPoint::of(&config)])?;
            emit("run", &args.common, &config, &outcomes)
        }
        Command::Ablate(args) => {
            let config = resolve_config(&args.common)?;
            let variants = if args.variants.is_empty() {
                VariantKind::ALL.to_vec()
            } else {
                args.variants.clone()
            };
            let outcomes = execute(&config, &variants, &[GridPoint::of(&config)])?;
            emit("ablate", &args.common, &config, &outcomes)
        }
        Command::Sweep(args) => {
            let config = resolve_config(&args.common)?;
            let base = GridPoint::of(&config);
            let axis = |given: &[f64], fallback: f64| -> Vec<f64> {
                if given.is_empty() {
                    vec![fallback]
                } else {
                    given.to_vec()
                }
            };
            let gammas = axis(&args.gamma, base.gamma);
            let lambdas = axis(&args.lambda, base.lambda);
            let rhos = axis(&args.rho, base.rho);
            let mut grid = Vec::new();
            for &gamma in &gammas {
                for &lambda in &lambdas {
                    for &rho in &rhos {
                        grid.push(GridPoint { gamma, lambda, rho });
                    }
                }
            }
            let outcomes = execute(&config, &[VariantKind::Full], &grid)?;
            emit("sweep", &args.common, &config, &outcomes)
        }
        Command::Datasets => {
            list_datasets();
            Ok(())
        }
    }
}

fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut config = match (&common.config, &common.preset) {
        (Some(path), None) => load_config(path, &common.sets),
        (None, Some(name)) => preset_config(name, &common.sets),
        _ => Err(Error::Validation(
            "pass a config file or --preset <name>".into(),
        )),
    }?;
    if let Some(path) = &common.report {
        config.report = Some(path.clone());
    }
    if let Some(path) = &common.table {
        config.table = Some(path.clone());
    }
    Ok(config)
}

/// Writes the report files, echoes the table, and prints stage timings.
fn emit(
    command: &str,
    common: &CommonArgs,
    config: &RunConfig,
    outcomes: &[exec::Outcome],
) -> Result<()> {
    let report_text = report::render_report(command, config, outcomes)?;
    let table_text = report::render_table(config, outcomes);

    let stem = common
        .config
        .as_deref()
        .map(|p| p.with_extension(""))
        .unwrap_or_else(|| {
            PathBuf::from(common.preset.as_deref().unwrap_or("evometric"))
        });
    let report_path = config
        .report
        .clone()
        .unwrap_or_else(|| stem.with_extension("report.json"));
    let table_path = config
        .table
        .clone()
        .unwrap_or_else(|| stem.with_extension("table.tsv"));
    report::write_outputs(&report_path, &table_path, &report_text, &table_text)?;

    print!("{table_text}");
    print!("{}", report::render_timings(outcomes));
    println!(
        "wrote {} and {}",
        report_path.display(),
        table_path.display()
    );
    Ok(())
}

fn list_datasets() {
    println!("synthetic families (run with --preset <name>):");
    for (name, description, config) in synthetic_presets() {
        let spec = config.synthetic.expect("presets are synthetic");
        println!(
            "  {name:<14} {description}\n  {:<14} classes {}, split {}/{}/{}, separation {}, {} batches of {}",
            "",
            spec.classes,
            spec.d_v,
            spec.d_s,
            spec.d_n,
            spec.separation,
            spec.n_batches,
            spec.batch_size
        );
    }
    println!("\ndataset presets (shapes for [dataset] sections):");
    for preset in dataset_presets() {
        let split = preset
            .split
            .map(|(v, s, n)| format!("{v}/{s}/{n}"))
            .unwrap_or_else(|| "quarters rule".into());
        let filter = if preset.class_filter.is_empty() {
            "all classes".into()
        } else {
            format!("classes {:?}", preset.class_filter)
        };
        println!(
            "  {:<14} split {split}, {} batches of {}, {filter}",
            preset.name, preset.n_batches, preset.batch_size
        );
    }
}
