//! Entropy-smoothed optimal transport between weighted point sets.
//!
//! A [`Signature`] is a distribution `{(x_i, mu_i)}` given by sample points
//! and normalized masses. The smoothed transport cost between two signatures
//! with ground cost `D` is
//!
//! ```text
//! W_sigma(P, Q) = min_F <D, F> - sigma * h(F),    h(F) = -<F, log F>,
//! ```
//!
//! minimized over couplings `F >= 0` with row sums `mu_p` and column sums
//! `mu_q`. The solver runs Sinkhorn iterations in the log domain so small
//! smoothing values do not underflow; the optimal coupling has the form
//! `diag(u) * exp(-D / sigma) * diag(v)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricState;

/// A weighted point set: one row of `points` per sample, one positive mass
/// per row, masses summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Signature {
    /// Sample matrix, `m x d`.
    pub points: DMatrix<f64>,
    /// Mass vector of length `m`; strictly positive, sums to 1 within 1e-9.
    pub weights: DVector<f64>,
}

impl Signature {
    /// Builds a signature after checking the mass invariants.
    pub fn new(points: DMatrix<f64>, weights: DVector<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::Validation("signature needs at least one point".into()));
        }
        if points.nrows() != weights.len() {
            return Err(Error::Shape(format!(
                "signature has {} points but {} weights",
                points.nrows(),
                weights.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("signature points must be finite".into()));
        }
        validate_weights(weights.as_slice())?;
        Ok(Signature { points, weights })
    }

    /// Builds a signature with uniform weights `1/m`.
    pub fn uniform(points: DMatrix<f64>) -> Result<Self> {
        let m = points.nrows();
        if m == 0 {
            return Err(Error::Validation("signature needs at least one point".into()));
        }
        let w = DVector::from_element(m, 1.0 / m as f64);
        Signature::new(points, w)
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    /// Collapses the signature to its weighted mean: a single point carrying
    /// all the mass. Transport between collapsed signatures degenerates to a
    /// plain squared distance between the means.
    pub fn barycenter(&self) -> Signature {
        let d = self.dim();
        let mut mean = DVector::zeros(d);
        for (i, w) in self.weights.iter().enumerate() {
            mean += self.points.row(i).transpose() * *w;
        }
        Signature {
            points: DMatrix::from_rows(&[mean.transpose()]),
            weights: DVector::from_element(1, 1.0),
        }
    }

    /// Restricts every point to the given column range, keeping rows and
    /// weights untouched.
    pub fn restrict_columns(&self, columns: std::ops::Range<usize>) -> Result<Signature> {
        if columns.end > self.dim() || columns.start > columns.end {
            return Err(Error::Shape(format!(
                "column range {}..{} out of bounds for dimension {}",
                columns.start,
                columns.end,
                self.dim()
            )));
        }
        let width = columns.end - columns.start;
        Ok(Signature {
            points: self.points.columns(columns.start, width).into_owned(),
            weights: self.weights.clone(),
        })
    }
}

fn validate_weights(w: &[f64]) -> Result<()> {
    if w.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Validation(
            "weights must be finite and strictly positive".into(),
        ));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "weights must sum to 1 (got {sum:.12})"
        )));
    }
    Ok(())
}

/// Pairwise transport costs between two signatures; entries are squared
/// distances, hence nonnegative and finite.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    /// `m x n` cost table, `values[(i, j)]` the cost of moving mass from
    /// source point `i` to target point `j`.
    pub values: DMatrix<f64>,
}

/// The solved coupling together with the smoothed transport value.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    /// Nonnegative `m x n` coupling with prescribed marginals.
    pub coupling: DMatrix<f64>,
    /// `<D, F> - sigma * h(F)`, the smoothed transport objective at `F`.
    pub value: f64,
    /// Sinkhorn sweeps performed.
    pub iterations_used: usize,
    /// Max absolute row/column marginal violation at exit.
    pub marginal_residual: f64,
    /// Whether the residual reached the configured tolerance.
    pub converged: bool,
}

/// Sinkhorn solver settings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SinkhornConfig {
    /// Entropic weight `sigma`; must be strictly positive.
    pub sigma: f64,
    /// Iteration cap; exceeding it returns an unconverged plan, not an error.
    pub max_iters: usize,
    /// Marginal residual threshold declaring convergence.
    pub tolerance: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            sigma: 0.1,
            max_iters: 1000,
            tolerance: 1e-6,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Validation(format!(
                "sinkhorn sigma must be strictly positive (got {})",
                self.sigma
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Validation("sinkhorn max_iters must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Validation(format!(
                "sinkhorn tolerance must be positive (got {})",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Squared-distance ground cost under one metric: `values[(i, j)] =
/// ||L (x_i - y_j)||^2` for source point `x_i` and target point `y_j`.
pub fn ground_cost(l: &MetricState, src: &Signature, tgt: &Signature) -> Result<CostMatrix> {
    let d = l.input_dim();
    if src.dim() != d || tgt.dim() != d {
        return Err(Error::Shape(format!(
            "metric expects dimension {d}, signatures have {} and {}",
            src.dim(),
            tgt.dim()
        )));
    }
    let a = &src.points * l.l.transpose();
    let b = &tgt.points * l.l.transpose();
    Ok(CostMatrix {
        values: pairwise_sq_dist(&a, &b),
    })
}

/// Squared-distance ground cost across two metrics sharing the embedding
/// dimension: `values[(u, v)] = ||L_src x_u - L_tgt y_v||^2`.
pub fn cross_ground_cost(
    l_src: &MetricState,
    src: &Signature,
    l_tgt: &MetricState,
    tgt: &Signature,
) -> Result<CostMatrix> {
    if l_src.embed_dim() != l_tgt.embed_dim() {
        return Err(Error::Shape(format!(
            "embedding dimensions differ: {} vs {}",
            l_src.embed_dim(),
            l_tgt.embed_dim()
        )));
    }
    if src.dim() != l_src.input_dim() {
        return Err(Error::Shape(format!(
            "source metric expects dimension {}, signature has {}",
            l_src.input_dim(),
            src.dim()
        )));
    }
    if tgt.dim() != l_tgt.input_dim() {
        return Err(Error::Shape(format!(
            "target metric expects dimension {}, signature has {}",
            l_tgt.input_dim(),
            tgt.dim()
        )));
    }
    let a = &src.points * l_src.l.transpose();
    let b = &tgt.points * l_tgt.l.transpose();
    Ok(CostMatrix {
        values: pairwise_sq_dist(&a, &b),
    })
}

fn pairwise_sq_dist(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n, k) = (a.nrows(), b.nrows(), a.ncols());
    DMatrix::from_fn(m, n, |i, j| {
        let mut acc = 0.0;
        for c in 0..k {
            let diff = a[(i, c)] - b[(j, c)];
            acc += diff * diff;
        }
        acc
    })
}

/// Solves the entropy-smoothed transport problem by log-domain Sinkhorn
/// iteration.
///
/// Row and column scalings are updated through log-sum-exp so arbitrarily
/// small `sigma` stays finite. Non-convergence within `max_iters` is reported
/// through the plan's `converged` flag rather than an error; invalid weights
/// are rejected up front.
pub fn sinkhorn(
    d: &CostMatrix,
    src_weights: &DVector<f64>,
    tgt_weights: &DVector<f64>,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan> {
    cfg.validate()?;
    let (m, n) = d.values.shape();
    if src_weights.len() != m || tgt_weights.len() != n {
        return Err(Error::Shape(format!(
            "cost is {m}x{n} but weights have lengths {} and {}",
            src_weights.len(),
            tgt_weights.len()
        )));
    }
    if d.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Validation(
            "cost entries must be finite and nonnegative".into(),
        ));
    }
    validate_weights(src_weights.as_slice())?;
    validate_weights(tgt_weights.as_slice())?;

    let sigma = cfg.sigma;
    let log_mu: Vec<f64> = src_weights.iter().map(|w| w.ln()).collect();
    let log_nu: Vec<f64> = tgt_weights.iter().map(|w| w.ln()).collect();
    // Dual potentials; the coupling is F_ij = exp((f_i + g_j - D_ij) / sigma).
    let mut f = vec![0.0_f64; m];
    let mut g = vec![0.0_f64; n];
    let mut coupling = DMatrix::zeros(m, n);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for it in 1..=cfg.max_iters {
        iterations = it;
        for i in 0..m {
            let lse = log_sum_exp((0..n).map(|j| (g[j] - d.values[(i, j)]) / sigma));
            f[i] = sigma * log_mu[i] - sigma * lse;
        }
        for j in 0..n {
            let lse = log_sum_exp((0..m).map(|i| (f[i] - d.values[(i, j)]) / sigma));
            g[j] = sigma * log_nu[j] - sigma * lse;
        }
        for i in 0..m {
            for j in 0..n {
                coupling[(i, j)] = ((f[i] + g[j] - d.values[(i, j)]) / sigma).exp();
            }
        }
        residual = marginal_residual(&coupling, src_weights, tgt_weights);
        if residual <= cfg.tolerance {
            converged = true;
            break;
        }
    }

    let mut value = 0.0;
    for i in 0..m {
        for j in 0..n {
            let fij = coupling[(i, j)];
            if fij > 0.0 {
                value += fij * (d.values[(i, j)] + sigma * fij.ln());
            }
        }
    }

    Ok(TransportPlan {
        coupling,
        value,
        iterations_used: iterations,
        marginal_residual: residual,
        converged,
    })
}

/// Max absolute deviation of the coupling's row and column sums from the
/// prescribed marginals.
pub fn marginal_residual(
    coupling: &DMatrix<f64>,
    src_weights: &DVector<f64>,
    tgt_weights: &DVector<f64>,
) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..coupling.nrows() {
        let sum: f64 = coupling.row(i).iter().sum();
        worst = worst.max((sum - src_weights[i]).abs());
    }
    for j in 0..coupling.ncols() {
        let sum: f64 = coupling.column(j).iter().sum();
        worst = worst.max((sum - tgt_weights[j]).abs());
    }
    worst
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.map(|t| (t - max).exp()).sum();
    max + sum.ln()
}
