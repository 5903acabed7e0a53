//! Transforming stage: joint learning of the all-feature metric `L_all` and
//! the survived-feature metric `L_surv` on batches whose features are about
//! to vanish.
//!
//! Per batch, the objective couples four hinge terms built from smoothed
//! transport distances:
//!
//! ```text
//! gamma/2 * ( [1 + W(P_a, Q_a) - W(P_a, K_a)]_+ + [1 + W(P_s, Q_s) - W(P_s, K_s)]_+ )
//! + rho/2 * ( [1 + W(P_a, Q_s) - W(P_a, K_s)]_+ + [1 + W(P_s, Q_a) - W(P_s, K_a)]_+ )
//! + lambda * ( ||L_surv||_* + ||L_all||_* )
//! ```
//!
//! where subscripts `a`/`s` denote the all-feature and survived-feature views
//! of one sample-aligned triplet and the cross terms compare embeddings of
//! the two metrics directly. Each inner iteration solves all transport plans
//! at the current iterate, evaluates hinge activity once, then applies two
//! closed-form prox updates (Gauss-Seidel: `L_all` first against the previous
//! `L_surv`, then `L_surv` against the fresh `L_all`). The closed forms are
//! exact stationary points of the frozen-plan quadratic subproblem
//!
//! ```text
//! 1/2 ||L - L_prev||_F^2 + lambda/2 tr(L Ht L^T) + sum_active w/2 * bracket(L)
//! ```
//!
//! with `Ht = (L_prev^T L_prev + eps I)^{-1/2}` the d-dimensional
//! trace-surrogate factor, yielding `L = (L_prev - rho L_other C) (I +
//! lambda Ht + gamma G + rho G')^{-1}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::StreamBatch;
use crate::error::{Error, Result};
use crate::metric::{inv_sqrt_gram, solve_right_factor, trace_norm, Hyperparams, MetricState};
use crate::transport::{cross_ground_cost, ground_cost, sinkhorn, Signature, SinkhornConfig, TransportPlan};
use crate::triplet::{build_triplets, project_triplet, SignatureTriplet};

/// Rank penalty used inside the closed-form updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    /// Trace-norm surrogate: the update factor carries `(L^T L + eps I)^{-1/2}`.
    TraceSurrogate,
    /// Squared Frobenius norm: the surrogate factor is the identity.
    Frobenius,
}

/// Knobs that select ablation behavior and transport solver effort for the
/// stage runners; the defaults reproduce the full method.
#[derive(Clone, Copy, Debug)]
pub struct StageOptions {
    pub regularizer: Regularizer,
    /// Collapse every signature to its barycenter (single-point transport).
    pub collapse_signatures: bool,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tolerance: f64,
}

impl Default for StageOptions {
    fn default() -> Self {
        StageOptions {
            regularizer: Regularizer::TraceSurrogate,
            collapse_signatures: false,
            sinkhorn_max_iters: 1000,
            sinkhorn_tolerance: 1e-6,
        }
    }
}

impl StageOptions {
    /// The transport solver configuration for these options; the smoothing
    /// weight always comes from the hyper-parameters.
    pub fn sinkhorn_config(&self, hp: &Hyperparams) -> SinkhornConfig {
        SinkhornConfig {
            sigma: hp.sigma,
            max_iters: self.sinkhorn_max_iters,
            tolerance: self.sinkhorn_tolerance,
        }
    }
}

/// The transforming-stage state: both metrics plus the objective history.
#[derive(Clone, Debug)]
pub struct TStageState {
    /// Metric over all (vanished + survived) features, `k x (d_v + d_s)`.
    pub l_all: MetricState,
    /// Metric over survived features only, `k x d_s`.
    pub l_surv: MetricState,
    /// Objective value at every inner evaluation, all batches concatenated.
    pub objective_trace: Vec<f64>,
    /// Start offset of each batch's segment in `objective_trace`.
    pub trace_offsets: Vec<usize>,
    /// Whether the last batch's inner loop met the convergence threshold.
    pub converged: bool,
}

impl TStageState {
    /// Wraps a metric pair after checking the shared embedding dimension.
    pub fn new(l_all: MetricState, l_surv: MetricState) -> Result<Self> {
        if l_all.embed_dim() != l_surv.embed_dim() {
            return Err(Error::Shape(format!(
                "metrics must share the embedding dimension ({} vs {})",
                l_all.embed_dim(),
                l_surv.embed_dim()
            )));
        }
        Ok(TStageState {
            l_all,
            l_surv,
            objective_trace: Vec::new(),
            trace_offsets: Vec::new(),
            converged: false,
        })
    }

    /// Truncated-identity initialization for both metrics.
    pub fn truncated(k: usize, d_all: usize, d_surv: usize, ridge_eps: f64) -> Result<Self> {
        TStageState::new(
            MetricState::truncated_identity(k, d_all, ridge_eps)?,
            MetricState::truncated_identity(k, d_surv, ridge_eps)?,
        )
    }
}

/// One sample-aligned triplet in both views; `surv` is `all` restricted to
/// the survived columns.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletPair {
    pub all: SignatureTriplet,
    pub surv: SignatureTriplet,
}

impl TripletPair {
    /// Projects an all-feature triplet onto the survived column range.
    pub fn project(all: &SignatureTriplet, survived: std::ops::Range<usize>) -> Result<Self> {
        let surv = project_triplet(all, survived)?;
        Ok(TripletPair {
            all: all.clone(),
            surv,
        })
    }

    /// Barycenter-collapsed copy (both views), for the plain-Mahalanobis
    /// ablation.
    pub fn collapse(&self) -> TripletPair {
        TripletPair {
            all: self.all.collapse(),
            surv: self.surv.collapse(),
        }
    }
}

/// The converged transport plans of every distance term of one triplet pair.
///
/// Same-space plans compare two signatures under one metric; cross plans
/// compare an `L_all` embedding against an `L_surv` embedding.
#[derive(Clone, Debug)]
pub struct TermPlans {
    /// (P_all, Q_all) under `L_all`.
    pub pq_all: TransportPlan,
    /// (P_all, K_all) under `L_all`.
    pub pk_all: TransportPlan,
    /// (P_surv, Q_surv) under `L_surv`.
    pub pq_surv: TransportPlan,
    /// (P_surv, K_surv) under `L_surv`.
    pub pk_surv: TransportPlan,
    /// P under `L_all` vs Q under `L_surv`.
    pub pq_all_surv: TransportPlan,
    /// P under `L_all` vs K under `L_surv`.
    pub pk_all_surv: TransportPlan,
    /// P under `L_surv` vs Q under `L_all`.
    pub pq_surv_all: TransportPlan,
    /// P under `L_surv` vs K under `L_all`.
    pub pk_surv_all: TransportPlan,
}

impl TermPlans {
    /// All-feature triplet hinge.
    pub fn hinge_all(&self) -> (f64, bool) {
        crate::metric::hinge_triplet(self.pq_all.value, self.pk_all.value)
    }

    /// Survived-feature triplet hinge.
    pub fn hinge_surv(&self) -> (f64, bool) {
        crate::metric::hinge_triplet(self.pq_surv.value, self.pk_surv.value)
    }

    /// Consistency hinge anchored in the all-feature embedding.
    pub fn hinge_cross_anchor_all(&self) -> (f64, bool) {
        crate::metric::hinge_triplet(self.pq_all_surv.value, self.pk_all_surv.value)
    }

    /// Consistency hinge anchored in the survived-feature embedding.
    pub fn hinge_cross_anchor_surv(&self) -> (f64, bool) {
        crate::metric::hinge_triplet(self.pq_surv_all.value, self.pk_surv_all.value)
    }
}

/// Solves the eight transport problems of one triplet pair at the current
/// metrics.
pub fn solve_term_plans(
    state: &TStageState,
    pair: &TripletPair,
    cfg: &SinkhornConfig,
) -> Result<TermPlans> {
    let la = &state.l_all;
    let ls = &state.l_surv;
    let plan = |d, sw: &Signature, tw: &Signature| -> Result<TransportPlan> {
        sinkhorn(&d, &sw.weights, &tw.weights, cfg)
    };
    let a = &pair.all;
    let s = &pair.surv;
    Ok(TermPlans {
        pq_all: plan(ground_cost(la, &a.p, &a.q)?, &a.p, &a.q)?,
        pk_all: plan(ground_cost(la, &a.p, &a.k)?, &a.p, &a.k)?,
        pq_surv: plan(ground_cost(ls, &s.p, &s.q)?, &s.p, &s.q)?,
        pk_surv: plan(ground_cost(ls, &s.p, &s.k)?, &s.p, &s.k)?,
        pq_all_surv: plan(cross_ground_cost(la, &a.p, ls, &s.q)?, &a.p, &s.q)?,
        pk_all_surv: plan(cross_ground_cost(la, &a.p, ls, &s.k)?, &a.p, &s.k)?,
        pq_surv_all: plan(cross_ground_cost(ls, &s.p, la, &a.q)?, &s.p, &a.q)?,
        pk_surv_all: plan(cross_ground_cost(ls, &s.p, la, &a.k)?, &s.p, &a.k)?,
    })
}

/// `sum_i (sum_j plan_ij) x_i x_i^T` -- the row-marginal-weighted Gram of the
/// source points.
fn gram_rowsum(pts: &DMatrix<f64>, plan: &DMatrix<f64>) -> DMatrix<f64> {
    let mut scaled = pts.clone();
    for i in 0..pts.nrows() {
        let w: f64 = plan.row(i).iter().sum();
        scaled.row_mut(i).scale_mut(w);
    }
    pts.transpose() * scaled
}

/// `sum_j (sum_i plan_ij) y_j y_j^T` -- the column-marginal-weighted Gram of
/// the target points.
fn gram_colsum(pts: &DMatrix<f64>, plan: &DMatrix<f64>) -> DMatrix<f64> {
    let mut scaled = pts.clone();
    for j in 0..pts.nrows() {
        let w: f64 = plan.column(j).iter().sum();
        scaled.row_mut(j).scale_mut(w);
    }
    pts.transpose() * scaled
}

/// `A^T plan B`, the bilinear coupling term between two point sets.
fn coupling_term(a: &DMatrix<f64>, plan: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * plan * b
}

fn sym_sum(x: DMatrix<f64>) -> DMatrix<f64> {
    let t = x.transpose();
    x + t
}

/// Objective weight of one hinge term. The closed-form factors carry the
/// bare weight because the bracket gradient is `2 L G`, so the objective
/// charges half the weight per hinge.
pub(crate) fn objective_hinge_weight(w: f64) -> f64 {
    0.5 * w
}

/// Gradient factor of a same-space bracket `<D(P,Q), F> - <D(P,K), F'>` with
/// respect to the shared metric: `d/dL = 2 L G`.
pub(crate) fn same_space_g(
    p: &Signature,
    q: &Signature,
    k: &Signature,
    f_pq: &DMatrix<f64>,
    f_pk: &DMatrix<f64>,
) -> DMatrix<f64> {
    gram_rowsum(&p.points, f_pq) - gram_rowsum(&p.points, f_pk)
        + gram_colsum(&q.points, f_pq)
        - gram_colsum(&k.points, f_pk)
        - sym_sum(coupling_term(&p.points, f_pq, &q.points))
        + sym_sum(coupling_term(&p.points, f_pk, &k.points))
}

pub(crate) fn surrogate_factor(m: &MetricState, reg: Regularizer) -> Result<DMatrix<f64>> {
    match reg {
        Regularizer::TraceSurrogate => inv_sqrt_gram(&m.l.transpose(), m.ridge_eps),
        Regularizer::Frobenius => Ok(DMatrix::identity(m.input_dim(), m.input_dim())),
    }
}

pub(crate) fn regularizer_value(m: &MetricState, reg: Regularizer) -> Result<f64> {
    match reg {
        Regularizer::TraceSurrogate => trace_norm(&m.l),
        Regularizer::Frobenius => Ok(0.5 * m.l.norm_squared()),
    }
}

/// Batch objective from already-solved plans: hinge losses weighted
/// `gamma/2` (same-space) and `rho/2` (cross-space) plus the `lambda`-scaled
/// rank penalty of both metrics. Proximity terms are excluded.
pub(crate) fn objective_from_plans(
    state: &TStageState,
    plan_sets: &[TermPlans],
    hp: &Hyperparams,
    reg: Regularizer,
) -> Result<f64> {
    let mut obj = 0.0;
    for plans in plan_sets {
        let (loss_a, _) = plans.hinge_all();
        let (loss_s, _) = plans.hinge_surv();
        let (cons_1, _) = plans.hinge_cross_anchor_all();
        let (cons_2, _) = plans.hinge_cross_anchor_surv();
        obj += objective_hinge_weight(hp.gamma) * (loss_a + loss_s)
            + objective_hinge_weight(hp.rho) * (cons_1 + cons_2);
    }
    obj += hp.lambda
        * (regularizer_value(&state.l_surv, reg)? + regularizer_value(&state.l_all, reg)?);
    Ok(obj)
}

/// Evaluates the batch objective at the current metrics, re-solving every
/// transport plan. Hinge values use the converged smoothed-transport values
/// (entropy term included); proximity terms are not part of the reported
/// objective.
pub fn tstage_objective(
    state: &TStageState,
    pairs: &[TripletPair],
    hp: &Hyperparams,
) -> Result<f64> {
    hp.validate()?;
    let cfg = StageOptions::default().sinkhorn_config(hp);
    let plan_sets: Vec<TermPlans> = pairs
        .iter()
        .map(|p| solve_term_plans(state, p, &cfg))
        .collect::<Result<_>>()?;
    objective_from_plans(state, &plan_sets, hp, Regularizer::TraceSurrogate)
}

/// Closed-form update of the all-feature metric from one triplet pair.
///
/// `state.l_surv` must still hold the previous surviving metric (the update
/// reads it in the cross terms), and the plans must be the converged
/// couplings solved at the current iterate. Inactive hinges contribute
/// nothing.
pub fn update_l_all(
    state: &TStageState,
    pair: &TripletPair,
    plans: &TermPlans,
    hp: &Hyperparams,
) -> Result<MetricState> {
    update_l_all_many(
        state,
        std::slice::from_ref(pair),
        std::slice::from_ref(plans),
        hp,
        Regularizer::TraceSurrogate,
    )
}

/// As [`update_l_all`], aggregating the gradient terms of many triplet pairs
/// into one closed-form solve.
pub fn update_l_all_many(
    state: &TStageState,
    pairs: &[TripletPair],
    plan_sets: &[TermPlans],
    hp: &Hyperparams,
    reg: Regularizer,
) -> Result<MetricState> {
    hp.validate()?;
    if pairs.len() != plan_sets.len() {
        return Err(Error::Shape(format!(
            "{} triplet pairs but {} plan sets",
            pairs.len(),
            plan_sets.len()
        )));
    }
    let d_all = state.l_all.input_dim();
    let mut factor = DMatrix::identity(d_all, d_all);
    factor += surrogate_factor(&state.l_all, reg)? * hp.lambda;
    let mut left = state.l_all.l.clone();

    for (pair, plans) in pairs.iter().zip(plan_sets) {
        let a = &pair.all;
        let s = &pair.surv;
        if hp.gamma > 0.0 && plans.hinge_all().1 {
            factor += same_space_g(
                &a.p,
                &a.q,
                &a.k,
                &plans.pq_all.coupling,
                &plans.pk_all.coupling,
            ) * hp.gamma;
        }
        if hp.rho > 0.0 {
            if plans.hinge_cross_anchor_all().1 {
                // Bracket W(P_a, Q_s) - W(P_a, K_s): the P rows live in the
                // all-feature space, Q/K rows in the survived space.
                let f3 = &plans.pq_all_surv.coupling;
                let f4 = &plans.pk_all_surv.coupling;
                factor += (gram_rowsum(&a.p.points, f3) - gram_rowsum(&a.p.points, f4)) * hp.rho;
                let c = coupling_term(&s.k.points, &f4.transpose(), &a.p.points)
                    - coupling_term(&s.q.points, &f3.transpose(), &a.p.points);
                left -= &state.l_surv.l * c * hp.rho;
            }
            if plans.hinge_cross_anchor_surv().1 {
                // Bracket W(P_s, Q_a) - W(P_s, K_a): Q/K rows live in the
                // all-feature space.
                let f5 = &plans.pq_surv_all.coupling;
                let f6 = &plans.pk_surv_all.coupling;
                factor += (gram_colsum(&a.q.points, f5) - gram_colsum(&a.k.points, f6)) * hp.rho;
                let c = coupling_term(&s.p.points, f6, &a.k.points)
                    - coupling_term(&s.p.points, f5, &a.q.points);
                left -= &state.l_surv.l * c * hp.rho;
            }
        }
    }
    let l_new = solve_right_factor(&left, &factor)?;
    MetricState::new(l_new, state.l_all.ridge_eps)
}

/// Closed-form update of the survived-feature metric from one triplet pair.
///
/// `state.l_all` must already hold the freshly updated all-feature metric;
/// `state.l_surv` is the previous iterate being updated.
pub fn update_l_surv(
    state: &TStageState,
    pair: &TripletPair,
    plans: &TermPlans,
    hp: &Hyperparams,
) -> Result<MetricState> {
    update_l_surv_many(
        state,
        std::slice::from_ref(pair),
        std::slice::from_ref(plans),
        hp,
        Regularizer::TraceSurrogate,
    )
}

/// As [`update_l_surv`], aggregated over many triplet pairs.
pub fn update_l_surv_many(
    state: &TStageState,
    pairs: &[TripletPair],
    plan_sets: &[TermPlans],
    hp: &Hyperparams,
    reg: Regularizer,
) -> Result<MetricState> {
    hp.validate()?;
    if pairs.len() != plan_sets.len() {
        return Err(Error::Shape(format!(
            "{} triplet pairs but {} plan sets",
            pairs.len(),
            plan_sets.len()
        )));
    }
    let d_surv = state.l_surv.input_dim();
    let mut factor = DMatrix::identity(d_surv, d_surv);
    factor += surrogate_factor(&state.l_surv, reg)? * hp.lambda;
    let mut left = state.l_surv.l.clone();

    for (pair, plans) in pairs.iter().zip(plan_sets) {
        let a = &pair.all;
        let s = &pair.surv;
        if hp.gamma > 0.0 && plans.hinge_surv().1 {
            factor += same_space_g(
                &s.p,
                &s.q,
                &s.k,
                &plans.pq_surv.coupling,
                &plans.pk_surv.coupling,
            ) * hp.gamma;
        }
        if hp.rho > 0.0 {
            if plans.hinge_cross_anchor_all().1 {
                let f3 = &plans.pq_all_surv.coupling;
                let f4 = &plans.pk_all_surv.coupling;
                factor += (gram_colsum(&s.q.points, f3) - gram_colsum(&s.k.points, f4)) * hp.rho;
                let c = coupling_term(&a.p.points, f4, &s.k.points)
                    - coupling_term(&a.p.points, f3, &s.q.points);
                left -= &state.l_all.l * c * hp.rho;
            }
            if plans.hinge_cross_anchor_surv().1 {
                let f5 = &plans.pq_surv_all.coupling;
                let f6 = &plans.pk_surv_all.coupling;
                factor += (gram_rowsum(&s.p.points, f5) - gram_rowsum(&s.p.points, f6)) * hp.rho;
                let c = coupling_term(&a.k.points, &f6.transpose(), &s.p.points)
                    - coupling_term(&a.q.points, &f5.transpose(), &s.p.points);
                left -= &state.l_all.l * c * hp.rho;
            }
        }
    }
    let l_new = solve_right_factor(&left, &factor)?;
    MetricState::new(l_new, state.l_surv.ridge_eps)
}

/// Runs the transforming stage over a stream of batches.
///
/// Per batch: triplets are drawn once (seed = `tcfg.rng_seed` + batch
/// position), then the inner loop alternates plan solves, hinge gating, and
/// the two closed-form updates until the objective change drops below
/// `hp.converge_delta` or `hp.inner_iters` is reached. The objective trace
/// records every inner evaluation including the pre-update one.
pub fn run_tstage(
    batches: &[StreamBatch],
    hp: &Hyperparams,
    tcfg: &crate::triplet::TripletConfig,
) -> Result<TStageState> {
    run_tstage_with(batches, hp, tcfg, None, &StageOptions::default())
}

/// As [`run_tstage`], with explicit initialization (multi-stage chaining) and
/// ablation options.
pub fn run_tstage_with(
    batches: &[StreamBatch],
    hp: &Hyperparams,
    tcfg: &crate::triplet::TripletConfig,
    init: Option<(MetricState, MetricState)>,
    opts: &StageOptions,
) -> Result<TStageState> {
    hp.validate()?;
    tcfg.validate()?;
    let first = batches
        .first()
        .ok_or_else(|| Error::Validation("transforming stage needs at least one batch".into()))?;
    let layout = first.layout.clone();
    if layout.d_v() == 0 || layout.d_s() == 0 || layout.d_n() != 0 {
        return Err(Error::Validation(format!(
            "transforming-stage batches need nonempty vanished and survived blocks and no augmented block (got {}/{}/{})",
            layout.d_v(),
            layout.d_s(),
            layout.d_n()
        )));
    }
    for b in batches {
        if b.layout != layout {
            return Err(Error::Validation(format!(
                "batch {} has a different feature layout",
                b.batch_index
            )));
        }
        layout.validate(b.x.ncols())?;
    }
    let d_all = layout.width();
    let d_surv = layout.d_s();
    let k = hp.rank_k.min(d_surv);
    let mut state = match init {
        Some((l_all, l_surv)) => {
            if l_all.input_dim() != d_all || l_surv.input_dim() != d_surv {
                return Err(Error::Shape(format!(
                    "init metrics are {}x{} and {}x{}, batches need input dimensions {} and {}",
                    l_all.embed_dim(),
                    l_all.input_dim(),
                    l_surv.embed_dim(),
                    l_surv.input_dim(),
                    d_all,
                    d_surv
                )));
            }
            TStageState::new(l_all, l_surv)?
        }
        None => TStageState::truncated(k, d_all, d_surv, crate::metric::DEFAULT_RIDGE_EPS)?,
    };
    let scfg = opts.sinkhorn_config(hp);

    for (pos, batch) in batches.iter().enumerate() {
        state.trace_offsets.push(state.objective_trace.len());
        let seeded = tcfg.with_seed(tcfg.rng_seed.wrapping_add(pos as u64));
        let triplets = build_triplets(batch, &seeded)?;
        let pairs: Vec<TripletPair> = triplets
            .iter()
            .map(|t| {
                let t = if opts.collapse_signatures {
                    t.collapse()
                } else {
                    t.clone()
                };
                TripletPair::project(&t, layout.survived.clone())
            })
            .collect::<Result<_>>()?;

        let mut plan_sets: Vec<TermPlans> = pairs
            .iter()
            .map(|p| solve_term_plans(&state, p, &scfg))
            .collect::<Result<_>>()?;
        let mut obj = objective_from_plans(&state, &plan_sets, hp, opts.regularizer)?;
        check_finite(obj, batch.batch_index)?;
        state.objective_trace.push(obj);
        state.converged = false;

        for _ in 0..hp.inner_iters {
            state.l_all = update_l_all_many(&state, &pairs, &plan_sets, hp, opts.regularizer)?;
            state.l_surv = update_l_surv_many(&state, &pairs, &plan_sets, hp, opts.regularizer)?;
            plan_sets = pairs
                .iter()
                .map(|p| solve_term_plans(&state, p, &scfg))
                .collect::<Result<_>>()?;
            let next = objective_from_plans(&state, &plan_sets, hp, opts.regularizer)?;
            check_finite(next, batch.batch_index)?;
            state.objective_trace.push(next);
            let delta = (next - obj).abs();
            obj = next;
            if delta < hp.converge_delta {
                state.converged = true;
                break;
            }
        }
    }
    Ok(state)
}

fn check_finite(obj: f64, batch_index: usize) -> Result<()> {
    if !obj.is_finite() {
        return Err(Error::Numeric(format!(
            "objective became non-finite in batch {batch_index}"
        )));
    }
    Ok(())
}
