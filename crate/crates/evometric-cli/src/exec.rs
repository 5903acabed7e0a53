//! Experiment execution: stream construction per repetition, the bounded
//! worker pool, and aggregation in declaration order.

use crate::config::{DataFormat, DatasetConfig, RunConfig, Scenario};
use evometric::{
    aggregate_runs, build_stream_from_dataset, make_multi_shot_stream, multi_shot_variant,
    one_shot_variant, parse_delimited_path, parse_sparse_text_path, synthetic_stream_from_spec,
    DatasetSpec, Error, Report, Result, VariantKind,
};
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Environment variable bounding the worker pool.
pub const WORKERS_ENV: &str = "EML_WORKERS";

/// One grid position of a sweep; `run` and `ablate` use the config values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub gamma: f64,
    pub lambda: f64,
    pub rho: f64,
}

impl GridPoint {
    pub fn of(config: &RunConfig) -> GridPoint {
        GridPoint {
            gamma: config.hyperparams.gamma,
            lambda: config.hyperparams.lambda,
            rho: config.hyperparams.rho,
        }
    }
}

/// One aggregated experiment outcome.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub variant: VariantKind,
    pub grid: GridPoint,
    pub report: Report,
}

/// Executes `variants x grid x runs` jobs in the bounded pool and aggregates
/// each `(variant, grid)` cell over its repetitions, preserving the given
/// variant and grid order in the result.
pub fn execute(
    config: &RunConfig,
    variants: &[VariantKind],
    grid: &[GridPoint],
) -> Result<Vec<Outcome>> {
    if variants.is_empty() {
        return Err(Error::Validation("no variants to run".into()));
    }
    if grid.is_empty() {
        return Err(Error::Validation("the hyperparameter grid is empty".into()));
    }
    let source = DataSource::load(config)?;
    let seeds: Vec<u64> = (0..config.runs).map(|i| config.seed.wrapping_add(i as u64)).collect();

    let mut jobs = Vec::with_capacity(variants.len() * grid.len() * seeds.len());
    for &variant in variants {
        for &point in grid {
            for &seed in &seeds {
                jobs.push((variant, point, seed));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers_from_env()?)
        .build()
        .map_err(|e| Error::Validation(format!("worker pool: {e}")))?;
    let reports: Vec<Report> = pool.install(|| {
        jobs.par_iter()
            .map(|&(variant, point, seed)| run_once(config, &source, variant, point, seed))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut outcomes = Vec::with_capacity(variants.len() * grid.len());
    let mut cursor = 0;
    for &variant in variants {
        for &point in grid {
            let cell = &reports[cursor..cursor + seeds.len()];
            cursor += seeds.len();
            outcomes.push(Outcome {
                variant,
                grid: point,
                report: aggregate_runs(cell)?,
            });
        }
    }
    Ok(outcomes)
}

/// Reads the worker bound from the environment; 0 or unset mean one worker
/// per core.
fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(0),
        Ok(raw) => raw.trim().parse::<usize>().map_err(|_| {
            Error::Validation(format!("{WORKERS_ENV}='{raw}' is not a worker count"))
        }),
    }
}

/// The file-backed source is parsed once and shared across jobs; synthetic
/// sources are sampled per job from the job seed.
enum DataSource {
    Synthetic,
    File { x: DMatrix<f64>, y: Vec<i64> },
}

impl DataSource {
    fn load(config: &RunConfig) -> Result<DataSource> {
        match &config.dataset {
            None => Ok(DataSource::Synthetic),
            Some(ds) => {
                let (x, y) = parse_dataset(ds)?;
                Ok(DataSource::File { x, y })
            }
        }
    }
}

fn parse_dataset(ds: &DatasetConfig) -> Result<(DMatrix<f64>, Vec<i64>)> {
    match ds.format {
        DataFormat::Sparse => parse_sparse_text_path(&ds.path, ds.dim),
        DataFormat::Delimited => {
            parse_delimited_path(&ds.path, ds.delimiter, ds.label_column, ds.has_header)
        }
    }
}

fn run_once(
    config: &RunConfig,
    source: &DataSource,
    variant: VariantKind,
    point: GridPoint,
    seed: u64,
) -> Result<Report> {
    let mut hp = config.hyperparams;
    hp.gamma = point.gamma;
    hp.lambda = point.lambda;
    hp.rho = point.rho;
    let tcfg = config.triplets.with_seed(config.triplets.rng_seed.wrapping_add(seed));

    match (&config.scenario, source) {
        (Scenario::OneShot, DataSource::Synthetic) => {
            let spec = config.synthetic.as_ref().expect("validated source");
            let mut spec = spec.clone();
            spec.seed = spec.seed.wrapping_add(seed);
            let stream = synthetic_stream_from_spec(&spec)?;
            one_shot_variant(variant, &stream, &hp, &tcfg, &config.eval)
        }
        (Scenario::OneShot, DataSource::File { x, y }) => {
            let ds = config.dataset.as_ref().expect("validated source");
            let (stream, _) = build_stream_from_dataset(x, y, &lib_spec(ds), seed)?;
            one_shot_variant(variant, &stream, &hp, &tcfg, &config.eval)
        }
        (
            Scenario::MultiShot {
                task,
                block_dims,
                batches_per_stage,
            },
            DataSource::Synthetic,
        ) => {
            let spec = config.synthetic.as_ref().expect("validated source");
            let (stream, schedule) = make_multi_shot_stream(
                spec.classes,
                block_dims,
                spec.separation,
                *batches_per_stage,
                spec.batch_size,
                spec.seed.wrapping_add(seed),
            )?;
            multi_shot_variant(variant, &stream, &schedule, &hp, &tcfg, &config.eval, *task)
        }
        (Scenario::MultiShot { .. }, DataSource::File { .. }) => Err(Error::Validation(
            "multi-shot scenarios need a synthetic source".into(),
        )),
    }
}

fn lib_spec(ds: &DatasetConfig) -> DatasetSpec {
    DatasetSpec {
        name: ds
            .name
            .clone()
            .or_else(|| ds.path.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "dataset".into()),
        class_filter: ds.class_filter.clone(),
        split: ds.split,
        n_batches: ds.n_batches,
        batch_size: ds.batch_size,
    }
}
