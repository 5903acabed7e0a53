//! Metric state, low-rank trace surrogate, hinge losses, and the
//! passive-aggressive single-triplet update.
//!
//! A metric is a linear map `L` (`k x d`) inducing the squared distance
//! `d_L(x, y) = ||L (x - y)||^2`. Low rank is encouraged through the trace
//! norm `||L||_* = tr((L^T L)^{1/2})`, handled in closed-form updates via the
//! inverse square root of the Gram matrix, `H = (L L^T + eps I)^{-1/2}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ridge added to Gram matrices before inversion.
pub const DEFAULT_RIDGE_EPS: f64 = 1e-8;

/// A learned linear metric with its cached inverse-sqrt-Gram factor.
///
/// The cache satisfies `H = (L L^T + ridge_eps I)^{-1/2}`; construct through
/// [`MetricState::new`] to keep it coherent.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricState {
    /// The metric map, `k x d`.
    pub l: DMatrix<f64>,
    /// Cached `(L L^T + ridge_eps I)^{-1/2}`, `k x k` symmetric positive definite.
    pub h: DMatrix<f64>,
    /// Ridge added to the Gram before the inverse square root.
    pub ridge_eps: f64,
}

impl MetricState {
    /// Wraps a metric map, computing the `H` cache.
    pub fn new(l: DMatrix<f64>, ridge_eps: f64) -> Result<Self> {
        if l.nrows() == 0 || l.ncols() == 0 {
            return Err(Error::Validation("metric must have k >= 1 and d >= 1".into()));
        }
        let h = inv_sqrt_gram(&l, ridge_eps)?;
        Ok(MetricState { l, h, ridge_eps })
    }

    /// The deterministic starting point used by every stage: the first
    /// `min(k, d)` rows of the identity, zero-padded to `k x d`.
    pub fn truncated_identity(k: usize, d: usize, ridge_eps: f64) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::Validation("metric must have k >= 1 and d >= 1".into()));
        }
        let mut l = DMatrix::zeros(k, d);
        for i in 0..k.min(d) {
            l[(i, i)] = 1.0;
        }
        MetricState::new(l, ridge_eps)
    }

    /// Embedding dimension `k`.
    pub fn embed_dim(&self) -> usize {
        self.l.nrows()
    }

    /// Input feature dimension `d`.
    pub fn input_dim(&self) -> usize {
        self.l.ncols()
    }

    /// Squared metric distance `||L (x - y)||^2`.
    pub fn sq_distance(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let diff = x - y;
        (&self.l * diff).norm_squared()
    }
}

/// Weights and loop settings shared by both learning stages.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    /// Triplet-loss weight `gamma`.
    pub gamma: f64,
    /// Low-rank regularization weight `lambda`.
    pub lambda: f64,
    /// Cross-space consistency weight `rho`.
    pub rho: f64,
    /// Entropic smoothing of the transport distances.
    pub sigma: f64,
    /// Embedding rows; the effective rank is capped at the input dimension.
    pub rank_k: usize,
    /// Inner-iteration cap per batch.
    pub inner_iters: usize,
    /// Stop once the objective changes less than this between iterations.
    pub converge_delta: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 1e-2,
            lambda: 1e-4,
            rho: 1e-3,
            sigma: 0.1,
            rank_k: 32,
            inner_iters: 100,
            converge_delta: 2.5e-5,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("rho", self.rho),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "hyperparams.{name} must be finite and >= 0 (got {v})"
                )));
            }
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Validation(format!(
                "hyperparams.sigma must be strictly positive (got {})",
                self.sigma
            )));
        }
        if self.rank_k == 0 {
            return Err(Error::Validation("hyperparams.rank_k must be >= 1".into()));
        }
        if self.inner_iters == 0 {
            return Err(Error::Validation(
                "hyperparams.inner_iters must be >= 1".into(),
            ));
        }
        if !(self.converge_delta > 0.0) {
            return Err(Error::Validation(format!(
                "hyperparams.converge_delta must be positive (got {})",
                self.converge_delta
            )));
        }
        Ok(())
    }
}

/// Inverse square root of the ridged Gram matrix: `(L L^T + eps I)^{-1/2}`.
///
/// Computed by symmetric eigendecomposition of `L L^T`, flooring negative
/// round-off eigenvalues at zero before the ridge is added. Fails if the
/// ridged spectrum is not strictly positive.
pub fn inv_sqrt_gram(l: &DMatrix<f64>, ridge_eps: f64) -> Result<DMatrix<f64>> {
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("matrix entries must be finite".into()));
    }
    if !ridge_eps.is_finite() || ridge_eps < 0.0 {
        return Err(Error::Validation(format!(
            "ridge_eps must be finite and >= 0 (got {ridge_eps})"
        )));
    }
    let gram = l * l.transpose();
    let eig = gram.symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for (c, lam) in eig.eigenvalues.iter().enumerate() {
        let ridged = lam.max(0.0) + ridge_eps;
        if ridged <= 0.0 {
            return Err(Error::Numeric(
                "gram matrix is singular; use a positive ridge_eps".into(),
            ));
        }
        // Scaling each eigenvector column by ridged^(-1/4) makes the outer
        // product V diag(ridged^(-1/2)) V^T.
        scaled.column_mut(c).scale_mut(ridged.powf(-0.25));
    }
    let h = &scaled * scaled.transpose();
    // The product is symmetric up to round-off; make it exact.
    Ok(symmetrize(h))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Sum of singular values of `L`, computed from the eigenvalues of the
/// smaller of the two Gram matrices.
pub fn trace_norm(l: &DMatrix<f64>) -> Result<f64> {
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("matrix entries must be finite".into()));
    }
    let gram = if l.nrows() <= l.ncols() {
        l * l.transpose()
    } else {
        l.transpose() * l
    };
    let eigvals = gram.symmetric_eigenvalues();
    Ok(eigvals.iter().map(|v| v.max(0.0).sqrt()).sum())
}

/// Margin hinge over two transport values: `max(0, 1 + w_pq - w_pk)` plus the
/// activity flag of the margin term.
pub fn hinge_triplet(w_pq: f64, w_pk: f64) -> (f64, bool) {
    let bracket = 1.0 + w_pq - w_pk;
    (bracket.max(0.0), bracket > 0.0)
}

/// Right-multiplies `a` by the inverse of the symmetric factor `m`, solving
/// the stationarity systems of the closed-form updates.
///
/// Fails with a condition-number report when the factor is singular or
/// indefinite, which the callers treat as a numerical error.
pub(crate) fn solve_right_factor(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = symmetrize(m.clone());
    let eig = sym.symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |acc, v| acc.min(*v));
    if min <= 1e-12 * max_abs.max(1.0) {
        let cond = if min > 0.0 { max_abs / min } else { f64::INFINITY };
        return Err(Error::Numeric(format!(
            "update factor is singular or indefinite (min eigenvalue {min:.3e}, condition number {cond:.3e})"
        )));
    }
    let mut inv_scaled = eig.eigenvectors.clone();
    for (c, lam) in eig.eigenvalues.iter().enumerate() {
        inv_scaled.column_mut(c).scale_mut(1.0 / lam);
    }
    Ok(a * (inv_scaled * eig.eigenvectors.transpose()))
}

/// One passive-aggressive metric step on a single point triplet.
///
/// Minimizes `1/2 ||L - L_prev||_F^2 + (gamma/2) * [1 + d_L(x_p, x_q) -
/// d_L(x_p, x_k)]_+` on the active hinge branch by solving the stationarity
/// condition `L = L_prev (I + gamma (u u^T - v v^T))^{-1}` with `u = x_p -
/// x_q`, `v = x_p - x_k`. When the hinge is inactive at `L_prev` (or `gamma`
/// is zero) the metric is returned unchanged.
pub fn pa_mahalanobis_update(
    l_prev: &MetricState,
    x_p: &DVector<f64>,
    x_q: &DVector<f64>,
    x_k: &DVector<f64>,
    gamma: f64,
) -> Result<MetricState> {
    let d = l_prev.input_dim();
    if x_p.len() != d || x_q.len() != d || x_k.len() != d {
        return Err(Error::Shape(format!(
            "metric expects dimension {d}, triplet has {}/{}/{}",
            x_p.len(),
            x_q.len(),
            x_k.len()
        )));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::Validation(format!(
            "gamma must be finite and >= 0 (got {gamma})"
        )));
    }
    let (_, active) = hinge_triplet(
        l_prev.sq_distance(x_p, x_q),
        l_prev.sq_distance(x_p, x_k),
    );
    if !active || gamma == 0.0 {
        return Ok(l_prev.clone());
    }
    let u = x_p - x_q;
    let v = x_p - x_k;
    let mut factor = DMatrix::identity(d, d);
    factor += gamma * (&u * u.transpose() - &v * v.transpose());
    let l_new = solve_right_factor(&l_prev.l, &factor)?;
    MetricState::new(l_new, l_prev.ridge_eps)
}
