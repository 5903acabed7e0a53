//! Scenario orchestration: the one-shot pipeline (train before the feature
//! change, inherit across it, classify after it) and multi-shot schedules
//! where features evolve several times.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureLayout, StreamBatch};
use crate::error::{Error, Result};
use crate::eval::{accuracy, knn_predict, EvalConfig, Report, Timings, VariantKind};
use crate::istage::{run_istage_with, stack_batch, IStageState, StackedBatch};
use crate::metric::{Hyperparams, MetricState, DEFAULT_RIDGE_EPS};
use crate::triplet::TripletConfig;
use crate::tstage::{run_tstage_with, Regularizer, StageOptions, TStageState};

/// What a multi-shot run predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// One accuracy on the final held-out batch, using the last two stages.
    FinalBatch,
    /// One accuracy per stage, chaining the learned metrics forward.
    PerStage,
}

/// A multi-shot evolution schedule: `shots` feature changes produce
/// `shots + 1` stages, each a run of equally sized batches with one layout.
///
/// Stages before the last expose the transforming view of their feature
/// change; the last stage exposes the inheriting view. Adjacent stages share
/// exactly one feature block, so each stage's survived width equals the next
/// stage's vanished width.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvolutionSchedule {
    /// Number of feature evolutions (M).
    pub shots: usize,
    /// Batch count per stage (`shots + 1` entries).
    pub batches_per_stage: Vec<usize>,
    /// Samples per batch, equal across stages.
    pub batch_size: usize,
    /// Layout of each stage's batches (`shots + 1` entries).
    pub layout_per_stage: Vec<FeatureLayout>,
}

impl EvolutionSchedule {
    /// Checks internal consistency and agreement with a concrete stream.
    pub fn validate(&self, stream: &[StreamBatch]) -> Result<()> {
        let stages = self.shots + 1;
        if self.shots == 0 {
            return Err(Error::Validation(
                "a multi-shot schedule needs at least 1 feature evolution".into(),
            ));
        }
        if self.batches_per_stage.len() != stages || self.layout_per_stage.len() != stages {
            return Err(Error::Validation(format!(
                "{} evolutions need {stages} stage entries, got {} batch counts and {} layouts",
                self.shots,
                self.batches_per_stage.len(),
                self.layout_per_stage.len()
            )));
        }
        if self.batches_per_stage.iter().any(|&b| b == 0) {
            return Err(Error::Validation("every stage needs at least one batch".into()));
        }
        for (s, layout) in self.layout_per_stage.iter().enumerate() {
            let is_last = s == self.shots;
            if is_last {
                if layout.d_v() != 0 || layout.d_s() == 0 {
                    return Err(Error::Validation(format!(
                        "stage {s} is the inheriting stage but has layout {layout:?}"
                    )));
                }
            } else if layout.d_v() == 0 || layout.d_s() == 0 || layout.d_n() != 0 {
                return Err(Error::Validation(format!(
                    "stage {s} is a transforming stage but has layout {layout:?}"
                )));
            }
            if s + 1 < stages {
                let next = &self.layout_per_stage[s + 1];
                let shared_next = if s + 1 == self.shots { next.d_s() } else { next.d_v() };
                if layout.d_s() != shared_next {
                    return Err(Error::Validation(format!(
                        "stages {s} and {} do not share a feature block ({} survived vs {} incoming)",
                        s + 1,
                        layout.d_s(),
                        shared_next
                    )));
                }
            }
        }
        let total: usize = self.batches_per_stage.iter().sum();
        if total != stream.len() {
            return Err(Error::Validation(format!(
                "schedule covers {total} batches but the stream has {}",
                stream.len()
            )));
        }
        let mut pos = 0;
        for (s, &count) in self.batches_per_stage.iter().enumerate() {
            for b in &stream[pos..pos + count] {
                if b.layout != self.layout_per_stage[s] {
                    return Err(Error::Validation(format!(
                        "batch {} does not match stage {s}'s layout",
                        b.batch_index
                    )));
                }
                b.layout.validate(b.x.ncols())?;
                if b.x.nrows() != self.batch_size {
                    return Err(Error::Validation(format!(
                        "batch {} has {} samples, schedule says {}",
                        b.batch_index,
                        b.x.nrows(),
                        self.batch_size
                    )));
                }
            }
            pos += count;
        }
        Ok(())
    }

    /// Start offset of each stage in the flat stream.
    fn stage_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.batches_per_stage.len());
        let mut pos = 0;
        for &count in &self.batches_per_stage {
            offsets.push(pos);
            pos += count;
        }
        offsets
    }
}

fn stage_options(variant: VariantKind) -> StageOptions {
    StageOptions {
        regularizer: if variant == VariantKind::FrobeniusPenalty {
            Regularizer::Frobenius
        } else {
            Regularizer::TraceSurrogate
        },
        collapse_signatures: variant == VariantKind::CollapseSignatures,
        ..Default::default()
    }
}

/// Runs the full one-shot pipeline: transform on the leading batches,
/// inherit on the next-to-last batch, classify the last batch.
pub fn run_one_shot(
    stream: &[StreamBatch],
    hp: &Hyperparams,
    tcfg: &TripletConfig,
    eval_cfg: &EvalConfig,
) -> Result<Report> {
    one_shot_variant(VariantKind::Full, stream, hp, tcfg, eval_cfg)
}

/// One-shot pipeline with an ablation variant. The skip variants replace the
/// corresponding stage's training by its truncated-identity initialization;
/// the other variants thread their options through both stages.
pub fn one_shot_variant(
    variant: VariantKind,
    stream: &[StreamBatch],
    hp: &Hyperparams,
    tcfg: &TripletConfig,
    eval_cfg: &EvalConfig,
) -> Result<Report> {
    hp.validate()?;
    tcfg.validate()?;
    eval_cfg.validate()?;
    if stream.len() < 3 {
        return Err(Error::Validation(format!(
            "a one-shot stream needs at least 3 batches (training, inheriting, evaluation), got {}",
            stream.len()
        )));
    }
    let r = stream.len() - 2;
    if stream[r].layout != stream[r + 1].layout {
        return Err(Error::Validation(
            "the inheriting and evaluation batches must share a layout".into(),
        ));
    }
    let opts = stage_options(variant);

    let t0 = Instant::now();
    let tstate = train_tstage(variant, &stream[..r], hp, tcfg, None, &opts)?;
    let tstage_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let train_stacked = stack_batch(&stream[r], &tstate.l_surv)?;
    let icfg = tcfg.with_seed(tcfg.rng_seed.wrapping_add(r as u64));
    let istate = train_istage(variant, &train_stacked, hp, &icfg, None, &opts)?;
    let istage_secs = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let test_stacked = stack_batch(&stream[r + 1], &tstate.l_surv)?;
    let preds = knn_predict(&train_stacked, &test_stacked, &istate.l_z, eval_cfg.knn_k)?;
    let acc = accuracy(&preds, &test_stacked.labels)?;
    let eval_secs = t2.elapsed().as_secs_f64();

    Ok(Report {
        variant,
        runs: 1,
        accuracy_mean: acc,
        accuracy_sd: 0.0,
        per_run_accuracies: vec![acc],
        stage_accuracies: None,
        tstage_trace: tstate.objective_trace,
        istage_trace: istate.objective_trace,
        timings: Timings {
            tstage: tstage_secs,
            istage: istage_secs,
            eval: eval_secs,
        },
    })
}

fn train_tstage(
    variant: VariantKind,
    batches: &[StreamBatch],
    hp: &Hyperparams,
    tcfg: &TripletConfig,
    init: Option<(MetricState, MetricState)>,
    opts: &StageOptions,
) -> Result<TStageState> {
    let first = batches
        .first()
        .ok_or_else(|| Error::Validation("transforming stage needs at least one batch".into()))?;
    if variant == VariantKind::SkipTransformingStage {
        let d_s = first.layout.d_s();
        let k = hp.rank_k.min(d_s);
        return TStageState::truncated(k, first.layout.width(), d_s, DEFAULT_RIDGE_EPS);
    }
    run_tstage_with(batches, hp, tcfg, init, opts)
}

fn train_istage(
    variant: VariantKind,
    train: &StackedBatch,
    hp: &Hyperparams,
    tcfg: &TripletConfig,
    init_from: Option<MetricState>,
    opts: &StageOptions,
) -> Result<IStageState> {
    if variant == VariantKind::SkipInheritingStage {
        let d_z = train.z.ncols();
        return IStageState::truncated(hp.rank_k.min(d_z), d_z, DEFAULT_RIDGE_EPS);
    }
    run_istage_with(train, hp, tcfg, init_from, opts)
}

/// Runs a multi-shot scenario.
pub fn run_multi_shot(
    stream: &[StreamBatch],
    schedule: &EvolutionSchedule,
    hp: &Hyperparams,
    tcfg: &TripletConfig,
    eval_cfg: &EvalConfig,
    task: TaskKind,
) -> Result<Report> {
    multi_shot_variant(VariantKind::Full, stream, schedule, hp, tcfg, eval_cfg, task)
}

/// Multi-shot scenario with an ablation variant.
///
/// Final-batch prediction treats the last two stages as a one-shot scenario.
/// Per-stage prediction scores stage 0 within its own view under the learned
/// all-feature metric, then walks the stages pairwise: each episode trains
/// the transforming stage on the earlier stage (warm-started from the
/// previous episode's survived-feature metric when shapes allow) and
/// inherits into the later stage, whose first batch trains the stacked
/// metric and second batch is scored.
#[allow(clippy::too_many_arguments)]
pub fn multi_shot_variant(
    variant: VariantKind,
    stream: &[StreamBatch],
    schedule: &EvolutionSchedule,
    hp: &Hyperparams,
    tcfg: &TripletConfig,
    eval_cfg: &EvalConfig,
    task: TaskKind,
) -> Result<Report> {
    hp.validate()?;
    tcfg.validate()?;
    eval_cfg.validate()?;
    schedule.validate(stream)?;
    let m = schedule.shots;
    let offsets = schedule.stage_offsets();
    let stage = |s: usize| -> &[StreamBatch] {
        &stream[offsets[s]..offsets[s] + schedule.batches_per_stage[s]]
    };

    match task {
        TaskKind::FinalBatch => {
            let last = stage(m);
            if last.len() < 2 {
                return Err(Error::Validation(
                    "final-batch prediction needs at least 2 batches in the last stage".into(),
                ));
            }
            let mut combined: Vec<StreamBatch> = stage(m - 1).to_vec();
            combined.extend_from_slice(&last[..2]);
            one_shot_variant(variant, &combined, hp, tcfg, eval_cfg)
        }
        TaskKind::PerStage => {
            per_stage_task(variant, stream, schedule, hp, tcfg, eval_cfg, &offsets)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn per_stage_task(
    variant: VariantKind,
    stream: &[StreamBatch],
    schedule: &EvolutionSchedule,
    hp: &Hyperparams,
    tcfg: &TripletConfig,
    eval_cfg: &EvalConfig,
    offsets: &[usize],
) -> Result<Report> {
    let m = schedule.shots;
    let stage = |s: usize| -> &[StreamBatch] {
        &stream[offsets[s]..offsets[s] + schedule.batches_per_stage[s]]
    };
    for s in 0..=m {
        if schedule.batches_per_stage[s] < 2 {
            return Err(Error::Validation(format!(
                "per-stage prediction needs at least 2 batches per stage; stage {s} has {}",
                schedule.batches_per_stage[s]
            )));
        }
    }
    let opts = stage_options(variant);
    let mut timings = Timings::default();
    let mut stage_accs = Vec::with_capacity(m + 1);

    // Stage 0 is scored within its own view: train on all but the last
    // batch, classify the last batch against the final training batch under
    // the learned all-feature metric.
    let s0 = stage(0);
    let t0 = Instant::now();
    let tcfg0 = tcfg.with_seed(tcfg.rng_seed.wrapping_add(offsets[0] as u64));
    let tstate0 = train_tstage(variant, &s0[..s0.len() - 1], hp, &tcfg0, None, &opts)?;
    timings.tstage += t0.elapsed().as_secs_f64();
    let e0 = Instant::now();
    let raw = |b: &StreamBatch| StackedBatch {
        z: b.x.clone(),
        labels: b.y.clone(),
    };
    let reference = raw(&s0[s0.len() - 2]);
    let held_out = raw(&s0[s0.len() - 1]);
    let preds = knn_predict(&reference, &held_out, &tstate0.l_all, eval_cfg.knn_k)?;
    stage_accs.push(accuracy(&preds, &held_out.labels)?);
    timings.eval += e0.elapsed().as_secs_f64();

    let tstage_trace = tstate0.objective_trace.clone();
    let mut istage_trace = Vec::new();
    let mut prev = tstate0;

    for e in 1..=m {
        // Transforming side of episode e: stage e-1. Episode 1 reuses the
        // stage-0 state; later episodes retrain with a warm start.
        let tstate = if e == 1 {
            prev
        } else {
            let train = stage(e - 1);
            let layout = &schedule.layout_per_stage[e - 1];
            let k = hp.rank_k.min(layout.d_s());
            let mut l_all = MetricState::truncated_identity(k, layout.width(), DEFAULT_RIDGE_EPS)?;
            if prev.l_surv.embed_dim() == k && prev.l_surv.input_dim() == layout.d_v() {
                // The earlier stage's survived block is this stage's
                // vanished block; carry its metric into the matching
                // columns.
                l_all
                    .l
                    .view_mut((0, 0), (k, layout.d_v()))
                    .copy_from(&prev.l_surv.l);
                l_all = MetricState::new(l_all.l, DEFAULT_RIDGE_EPS)?;
            }
            let l_surv = MetricState::truncated_identity(k, layout.d_s(), DEFAULT_RIDGE_EPS)?;
            let tcfg_e = tcfg.with_seed(tcfg.rng_seed.wrapping_add(offsets[e - 1] as u64));
            let t = Instant::now();
            let state = train_tstage(variant, train, hp, &tcfg_e, Some((l_all, l_surv)), &opts)?;
            timings.tstage += t.elapsed().as_secs_f64();
            state
        };

        // Inheriting side: stage e's first batch trains, second is scored.
        // Intermediate stages expose a transforming layout over the same
        // column split, so re-label it as the inheriting view.
        let se = stage(e);
        let as_inheriting = |b: &StreamBatch| -> StreamBatch {
            let mut b = b.clone();
            if b.layout.d_v() != 0 {
                b.layout = FeatureLayout::inheriting(b.layout.d_v(), b.layout.d_s());
            }
            b
        };
        let t = Instant::now();
        let itrain = stack_batch(&as_inheriting(&se[0]), &tstate.l_surv)?;
        let icfg = tcfg.with_seed(tcfg.rng_seed.wrapping_add(offsets[e] as u64));
        let istate = train_istage(variant, &itrain, hp, &icfg, None, &opts)?;
        timings.istage += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let itest = stack_batch(&as_inheriting(&se[1]), &tstate.l_surv)?;
        let preds = knn_predict(&itrain, &itest, &istate.l_z, eval_cfg.knn_k)?;
        stage_accs.push(accuracy(&preds, &itest.labels)?);
        timings.eval += t.elapsed().as_secs_f64();
        istage_trace = istate.objective_trace;
        prev = tstate;
    }

    let mean = stage_accs.iter().sum::<f64>() / stage_accs.len() as f64;
    Ok(Report {
        variant,
        runs: 1,
        accuracy_mean: mean,
        accuracy_sd: 0.0,
        per_run_accuracies: vec![mean],
        stage_accuracies: Some(stage_accs),
        tstage_trace,
        istage_trace,
        timings,
    })
}
