//! Inheriting stage: carries the survived-feature metric forward by stacking
//! embedded survived features with raw augmented features, then learns a
//! single metric `L_z` over the stacked representation.
//!
//! The stacked sample is `z = [x_surv L_surv^T, x_new]`, so distances under
//! `L_z` inherit the geometry learned before the feature change while the new
//! columns start untransformed. The per-batch objective is the single
//! triplet hinge
//!
//! ```text
//! gamma/2 * [1 + W(P, Q) - W(P, K)]_+ + lambda * ||L_z||_*
//! ```
//!
//! over stacked-space signatures, optimized by the same frozen-plan
//! closed-form prox iteration as the transforming stage.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::metric::{solve_right_factor, Hyperparams, MetricState};
use crate::transport::{ground_cost, sinkhorn, SinkhornConfig, TransportPlan};
use crate::triplet::{build_triplets_from, SignatureTriplet, TripletConfig};
use crate::tstage::{
    objective_hinge_weight, regularizer_value, same_space_g, surrogate_factor, Regularizer,
    StageOptions,
};

/// Samples in the stacked representation: embedded survived features next to
/// raw augmented features.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedBatch {
    /// `n x (k + d_n)` stacked sample matrix.
    pub z: DMatrix<f64>,
    /// Class label per row.
    pub labels: Vec<usize>,
}

/// The inheriting-stage state: the stacked-space metric and its objective
/// history.
#[derive(Clone, Debug)]
pub struct IStageState {
    /// Metric over the stacked space, `k_z x (k + d_n)`.
    pub l_z: MetricState,
    /// Objective value at every inner evaluation.
    pub objective_trace: Vec<f64>,
    /// Whether the inner loop met the convergence threshold.
    pub converged: bool,
}

impl IStageState {
    /// Truncated-identity initialization.
    pub fn truncated(k: usize, d_z: usize, ridge_eps: f64) -> Result<Self> {
        Ok(IStageState {
            l_z: MetricState::truncated_identity(k, d_z, ridge_eps)?,
            objective_trace: Vec::new(),
            converged: false,
        })
    }
}

/// Embeds survived features through `l_surv` and concatenates the augmented
/// features: `z = [x_surv l_surv^T, x_new]`.
///
/// `labels` carries the class of each row into the stacked batch.
pub fn stack_features(
    x_surv: &DMatrix<f64>,
    x_new: &DMatrix<f64>,
    l_surv: &MetricState,
    labels: &[usize],
) -> Result<StackedBatch> {
    if x_surv.nrows() != x_new.nrows() {
        return Err(Error::Shape(format!(
            "survived and augmented blocks have {} and {} rows",
            x_surv.nrows(),
            x_new.nrows()
        )));
    }
    if x_surv.ncols() != l_surv.input_dim() {
        return Err(Error::Shape(format!(
            "survived block has {} columns but the metric expects {}",
            x_surv.ncols(),
            l_surv.input_dim()
        )));
    }
    if labels.len() != x_surv.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            x_surv.nrows()
        )));
    }
    let n = x_surv.nrows();
    let k = l_surv.embed_dim();
    let embedded = x_surv * l_surv.l.transpose();
    let mut z = DMatrix::zeros(n, k + x_new.ncols());
    z.view_mut((0, 0), (n, k)).copy_from(&embedded);
    z.view_mut((0, k), (n, x_new.ncols())).copy_from(x_new);
    Ok(StackedBatch {
        z,
        labels: labels.to_vec(),
    })
}

/// Stacks an inheriting-view stream batch (survived + augmented columns)
/// through the learned survived-feature metric.
pub fn stack_batch(
    batch: &crate::data::StreamBatch,
    l_surv: &MetricState,
) -> Result<StackedBatch> {
    let layout = &batch.layout;
    if layout.d_v() != 0 {
        return Err(Error::Validation(format!(
            "batch {} still has vanished columns; stacking expects the inheriting view",
            batch.batch_index
        )));
    }
    layout.validate(batch.x.ncols())?;
    let x_surv = batch.x.columns(layout.survived.start, layout.d_s()).into_owned();
    let x_new = batch
        .x
        .columns(layout.augmented.start, layout.d_n())
        .into_owned();
    stack_features(&x_surv, &x_new, l_surv, &batch.y)
}

/// Converged transport plans of the two stacked-space distance terms.
#[derive(Clone, Debug)]
pub struct IStagePlans {
    /// (P, Q) similar-pair plan.
    pub pq: TransportPlan,
    /// (P, K) dissimilar-pair plan.
    pub pk: TransportPlan,
}

impl IStagePlans {
    pub fn hinge(&self) -> (f64, bool) {
        crate::metric::hinge_triplet(self.pq.value, self.pk.value)
    }
}

/// Solves both transport problems of one stacked-space triplet at the
/// current metric.
pub fn solve_istage_plans(
    state: &IStageState,
    triplet: &SignatureTriplet,
    cfg: &SinkhornConfig,
) -> Result<IStagePlans> {
    let l = &state.l_z;
    Ok(IStagePlans {
        pq: sinkhorn(
            &ground_cost(l, &triplet.p, &triplet.q)?,
            &triplet.p.weights,
            &triplet.q.weights,
            cfg,
        )?,
        pk: sinkhorn(
            &ground_cost(l, &triplet.p, &triplet.k)?,
            &triplet.p.weights,
            &triplet.k.weights,
            cfg,
        )?,
    })
}

/// Closed-form update of the stacked-space metric from one triplet:
/// `L_z (I + lambda Ht + gamma G)^{-1}` with the hinge-gated gradient factor
/// `G` of the frozen-plan bracket.
pub fn istage_update(
    state: &IStageState,
    triplet: &SignatureTriplet,
    plans: &IStagePlans,
    hp: &Hyperparams,
) -> Result<MetricState> {
    istage_update_many(
        state,
        std::slice::from_ref(triplet),
        std::slice::from_ref(plans),
        hp,
        Regularizer::TraceSurrogate,
    )
}

/// As [`istage_update`], aggregated over many triplets.
pub fn istage_update_many(
    state: &IStageState,
    triplets: &[SignatureTriplet],
    plan_sets: &[IStagePlans],
    hp: &Hyperparams,
    reg: Regularizer,
) -> Result<MetricState> {
    hp.validate()?;
    if triplets.len() != plan_sets.len() {
        return Err(Error::Shape(format!(
            "{} triplets but {} plan sets",
            triplets.len(),
            plan_sets.len()
        )));
    }
    let d_z = state.l_z.input_dim();
    let mut factor = DMatrix::identity(d_z, d_z);
    factor += surrogate_factor(&state.l_z, reg)? * hp.lambda;
    if hp.gamma > 0.0 {
        for (triplet, plans) in triplets.iter().zip(plan_sets) {
            if plans.hinge().1 {
                factor += same_space_g(
                    &triplet.p,
                    &triplet.q,
                    &triplet.k,
                    &plans.pq.coupling,
                    &plans.pk.coupling,
                ) * hp.gamma;
            }
        }
    }
    let l_new = solve_right_factor(&state.l_z.l, &factor)?;
    MetricState::new(l_new, state.l_z.ridge_eps)
}

/// Evaluates the stacked-space objective at the current metric, re-solving
/// the transport plans.
pub fn istage_objective(
    state: &IStageState,
    triplets: &[SignatureTriplet],
    hp: &Hyperparams,
) -> Result<f64> {
    hp.validate()?;
    let cfg = StageOptions::default().sinkhorn_config(hp);
    let plan_sets: Vec<IStagePlans> = triplets
        .iter()
        .map(|t| solve_istage_plans(state, t, &cfg))
        .collect::<Result<_>>()?;
    objective_from_plans(state, &plan_sets, hp, Regularizer::TraceSurrogate)
}

fn objective_from_plans(
    state: &IStageState,
    plan_sets: &[IStagePlans],
    hp: &Hyperparams,
    reg: Regularizer,
) -> Result<f64> {
    let mut obj = 0.0;
    for plans in plan_sets {
        obj += objective_hinge_weight(hp.gamma) * plans.hinge().0;
    }
    obj += hp.lambda * regularizer_value(&state.l_z, reg)?;
    Ok(obj)
}

/// Runs the inheriting stage on one stacked training batch.
///
/// Initialization comes from `init_from` when provided (multi-shot chaining),
/// else a truncated identity of rank `min(hp.rank_k, k + d_n)`.
pub fn run_istage(
    train: &StackedBatch,
    hp: &Hyperparams,
    tcfg: &TripletConfig,
    init_from: Option<MetricState>,
) -> Result<IStageState> {
    run_istage_with(train, hp, tcfg, init_from, &StageOptions::default())
}

/// As [`run_istage`], with ablation options.
pub fn run_istage_with(
    train: &StackedBatch,
    hp: &Hyperparams,
    tcfg: &TripletConfig,
    init_from: Option<MetricState>,
    opts: &StageOptions,
) -> Result<IStageState> {
    hp.validate()?;
    tcfg.validate()?;
    let d_z = train.z.ncols();
    if d_z == 0 {
        return Err(Error::Validation(
            "stacked batch has no columns to learn a metric over".into(),
        ));
    }
    let mut state = match init_from {
        Some(l_z) => {
            if l_z.input_dim() != d_z {
                return Err(Error::Shape(format!(
                    "init metric expects {} input columns but the stacked batch has {}",
                    l_z.input_dim(),
                    d_z
                )));
            }
            IStageState {
                l_z,
                objective_trace: Vec::new(),
                converged: false,
            }
        }
        None => IStageState::truncated(
            hp.rank_k.min(d_z),
            d_z,
            crate::metric::DEFAULT_RIDGE_EPS,
        )?,
    };
    let scfg = opts.sinkhorn_config(hp);
    let triplets = build_triplets_from(&train.z, &train.labels, tcfg)?;
    let triplets: Vec<SignatureTriplet> = if opts.collapse_signatures {
        triplets.iter().map(|t| t.collapse()).collect()
    } else {
        triplets
    };

    let mut plan_sets: Vec<IStagePlans> = triplets
        .iter()
        .map(|t| solve_istage_plans(&state, t, &scfg))
        .collect::<Result<_>>()?;
    let mut obj = objective_from_plans(&state, &plan_sets, hp, opts.regularizer)?;
    if !obj.is_finite() {
        return Err(Error::Numeric("stacked-space objective is non-finite".into()));
    }
    state.objective_trace.push(obj);

    for _ in 0..hp.inner_iters {
        state.l_z = istage_update_many(&state, &triplets, &plan_sets, hp, opts.regularizer)?;
        plan_sets = triplets
            .iter()
            .map(|t| solve_istage_plans(&state, t, &scfg))
            .collect::<Result<_>>()?;
        let next = objective_from_plans(&state, &plan_sets, hp, opts.regularizer)?;
        if !next.is_finite() {
            return Err(Error::Numeric("stacked-space objective is non-finite".into()));
        }
        state.objective_trace.push(next);
        let delta = (next - obj).abs();
        obj = next;
        if delta < hp.converge_delta {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}
