//! Evaluation: nearest-neighbor classification in a learned metric,
//! run reports, aggregation over repetitions, and the ablation variants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::istage::StackedBatch;
use crate::metric::MetricState;

/// Pipeline variants: the full method and the four ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariantKind {
    /// Complete two-stage pipeline.
    #[serde(rename = "full")]
    Full,
    /// Skip transforming-stage training; stacking uses a truncated-identity
    /// survived-feature metric.
    #[serde(rename = "woT")]
    SkipTransformingStage,
    /// Skip inheriting-stage training; classification uses the initialized
    /// stacked-space metric.
    #[serde(rename = "woI")]
    SkipInheritingStage,
    /// Collapse every signature to its barycenter, reducing each transport
    /// distance to a squared Mahalanobis distance between means.
    #[serde(rename = "woW")]
    CollapseSignatures,
    /// Replace the trace-norm surrogate by a squared Frobenius penalty.
    #[serde(rename = "woLR")]
    FrobeniusPenalty,
}

impl VariantKind {
    pub const ALL: [VariantKind; 5] = [
        VariantKind::Full,
        VariantKind::SkipTransformingStage,
        VariantKind::SkipInheritingStage,
        VariantKind::CollapseSignatures,
        VariantKind::FrobeniusPenalty,
    ];

    /// The short tag used in tables and configuration.
    pub fn tag(&self) -> &'static str {
        match self {
            VariantKind::Full => "full",
            VariantKind::SkipTransformingStage => "woT",
            VariantKind::SkipInheritingStage => "woI",
            VariantKind::CollapseSignatures => "woW",
            VariantKind::FrobeniusPenalty => "woLR",
        }
    }
}

impl std::fmt::Display for VariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantKind::ALL
            .iter()
            .copied()
            .find(|v| v.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown variant '{s}'; expected one of full, woT, woI, woW, woLR"
                ))
            })
    }
}

/// Evaluation settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Neighbor count of the classification rule.
    pub knn_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { knn_k: 1 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knn_k == 0 {
            return Err(Error::Validation("eval.knn_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Wall-clock seconds per pipeline phase. Excluded from serialized reports;
/// reproducibility of report files must not depend on machine speed.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timings {
    pub tstage: f64,
    pub istage: f64,
    pub eval: f64,
}

/// Outcome of one experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub variant: VariantKind,
    /// Number of aggregated repetitions.
    pub runs: usize,
    pub accuracy_mean: f64,
    /// Sample standard deviation over runs (0 for a single run).
    pub accuracy_sd: f64,
    pub per_run_accuracies: Vec<f64>,
    /// Per-stage accuracies of a multi-shot per-stage run.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage_accuracies: Option<Vec<f64>>,
    pub tstage_trace: Vec<f64>,
    pub istage_trace: Vec<f64>,
    #[serde(skip)]
    pub timings: Timings,
}

/// Classifies each test row by the majority label of its `k` nearest
/// training rows under `‖L(z_i - z_j)‖²`.
///
/// Ties are broken by the smaller summed distance of the tied labels'
/// neighbors, then by the smaller label.
pub fn knn_predict(
    train: &StackedBatch,
    test: &StackedBatch,
    l: &MetricState,
    k: usize,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Validation("neighbor count must be at least 1".into()));
    }
    let n_train = train.z.nrows();
    if n_train == 0 {
        return Err(Error::Validation("training batch is empty".into()));
    }
    if k > n_train {
        return Err(Error::Validation(format!(
            "neighbor count {k} exceeds the {n_train} training rows"
        )));
    }
    if train.z.ncols() != test.z.ncols() {
        return Err(Error::Shape(format!(
            "train and test have {} and {} columns",
            train.z.ncols(),
            test.z.ncols()
        )));
    }
    if train.z.ncols() != l.input_dim() {
        return Err(Error::Shape(format!(
            "data has {} columns but the metric expects {}",
            train.z.ncols(),
            l.input_dim()
        )));
    }
    let lt = l.l.transpose();
    let etrain = &train.z * &lt;
    let etest = &test.z * &lt;

    let mut preds = Vec::with_capacity(etest.nrows());
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n_train);
    for i in 0..etest.nrows() {
        dists.clear();
        for j in 0..n_train {
            let d = (etest.row(i) - etrain.row(j)).norm_squared();
            dists.push((d, j));
        }
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // (count, summed distance) per candidate label among the k nearest.
        let mut votes: std::collections::BTreeMap<usize, (usize, f64)> =
            std::collections::BTreeMap::new();
        for &(d, j) in &dists[..k] {
            let e = votes.entry(train.labels[j]).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += d;
        }
        let (&label, _) = votes
            .iter()
            .max_by(|(la, (ca, da)), (lb, (cb, db))| {
                ca.cmp(cb)
                    .then(db.total_cmp(da))
                    .then(lb.cmp(la))
            })
            .expect("k >= 1 guarantees at least one vote");
        preds.push(label);
    }
    Ok(preds)
}

/// Fraction of equal entries of two label sequences.
pub fn accuracy(predicted: &[usize], actual: &[usize]) -> Result<f64> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(Error::Shape(format!(
            "cannot score {} predictions against {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    let hits = predicted
        .iter()
        .zip(actual)
        .filter(|(p, a)| p == a)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Runs one pipeline variant on a one-shot stream.
pub fn run_variant(
    variant: VariantKind,
    stream: &[crate::data::StreamBatch],
    hp: &crate::metric::Hyperparams,
    tcfg: &crate::triplet::TripletConfig,
    eval_cfg: &EvalConfig,
) -> Result<Report> {
    crate::driver::one_shot_variant(variant, stream, hp, tcfg, eval_cfg)
}

/// Aggregates repetition reports of one configuration: mean and sample
/// standard deviation of the per-run accuracy, elementwise-mean stage
/// accuracies, traces from the first run, timings summed.
pub fn aggregate_runs(reports: &[Report]) -> Result<Report> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Validation("cannot aggregate zero reports".into()))?;
    if reports.iter().any(|r| r.variant != first.variant) {
        return Err(Error::Validation(
            "cannot aggregate reports of different variants".into(),
        ));
    }
    let n = reports.len();
    let values: Vec<f64> = reports.iter().map(|r| r.accuracy_mean).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let stage_accuracies = first.stage_accuracies.as_ref().and_then(|proto| {
        let len = proto.len();
        if reports
            .iter()
            .all(|r| r.stage_accuracies.as_ref().is_some_and(|s| s.len() == len))
        {
            let mut acc = vec![0.0; len];
            for r in reports {
                for (a, v) in acc.iter_mut().zip(r.stage_accuracies.as_ref().unwrap()) {
                    *a += v;
                }
            }
            for a in &mut acc {
                *a /= n as f64;
            }
            Some(acc)
        } else {
            None
        }
    });
    let timings = reports.iter().fold(Timings::default(), |t, r| Timings {
        tstage: t.tstage + r.timings.tstage,
        istage: t.istage + r.timings.istage,
        eval: t.eval + r.timings.eval,
    });
    Ok(Report {
        variant: first.variant,
        runs: n,
        accuracy_mean: mean,
        accuracy_sd: sd,
        per_run_accuracies: values,
        stage_accuracies,
        tstage_trace: first.tstage_trace.clone(),
        istage_trace: first.istage_trace.clone(),
        timings,
    })
}
