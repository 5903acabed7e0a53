//! Shared oracles for the integration suites.
//!
//! Everything here is transcribed directly from the objective definitions
//! with explicit scalar loops, independent of the library's closed-form
//! update algebra, so agreement is evidence rather than tautology.

#![allow(dead_code)]

use evometric::{
    ground_cost, sinkhorn, solve_term_plans, IStagePlans, MetricState, Regularizer, Signature,
    SignatureTriplet, SinkhornConfig, StageOptions, TStageState, TermPlans, TripletPair,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random signature with positive normalized weights.
pub fn rand_signature(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Signature {
    rand_signature_scaled(rng, n, d, 1.0)
}

/// Random signature with the points shrunk by `scale`. Small scales keep
/// frozen subproblems strongly convex even when every hinge is active.
pub fn rand_signature_scaled(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Signature {
    let points = rand_matrix(rng, n, d) * scale;
    let mut w = DVector::from_fn(n, |_, _| 0.2 + rng.gen::<f64>());
    let sum = w.sum();
    w /= sum;
    Signature::new(points, w).expect("positive normalized weights")
}

/// Entropy-regularized transport value of a fixed coupling:
/// `<D, F> + sigma <F, ln F>` with `0 ln 0 = 0`.
pub fn plan_value(cost: &DMatrix<f64>, coupling: &DMatrix<f64>, sigma: f64) -> f64 {
    let mut v = 0.0;
    for i in 0..cost.nrows() {
        for j in 0..cost.ncols() {
            let f = coupling[(i, j)];
            if f > 0.0 {
                v += f * (cost[(i, j)] + sigma * f.ln());
            }
        }
    }
    v
}

/// Squared-distance cost matrix of two point sets in one embedding,
/// elementwise.
pub fn cost_same(l: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ea = a * l.transpose();
    let eb = b * l.transpose();
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let mut s = 0.0;
        for t in 0..ea.ncols() {
            let d = ea[(i, t)] - eb[(j, t)];
            s += d * d;
        }
        s
    })
}

/// Cost matrix across two embeddings.
pub fn cost_cross(
    la: &DMatrix<f64>,
    a: &DMatrix<f64>,
    lb: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> DMatrix<f64> {
    let ea = a * la.transpose();
    let eb = b * lb.transpose();
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let mut s = 0.0;
        for t in 0..ea.ncols() {
            let d = ea[(i, t)] - eb[(j, t)];
            s += d * d;
        }
        s
    })
}

/// `d/dL <D_L(A, B), F>` where `D_L(A,B)_ij = ||L(a_i - b_j)||^2`, by scalar
/// loops: `sum_ij F_ij * 2 L (a_i - b_j)(a_i - b_j)^T`.
pub fn grad_same_term(
    l: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    coupling: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (k, d) = (l.nrows(), l.ncols());
    let mut g = DMatrix::zeros(k, d);
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            let f = coupling[(i, j)];
            if f == 0.0 {
                continue;
            }
            let mut v = vec![0.0; d];
            for t in 0..d {
                v[t] = a[(i, t)] - b[(j, t)];
            }
            // u = L v
            for r in 0..k {
                let mut u = 0.0;
                for t in 0..d {
                    u += l[(r, t)] * v[t];
                }
                let scale = 2.0 * f * u;
                for t in 0..d {
                    g[(r, t)] += scale * v[t];
                }
            }
        }
    }
    g
}

/// Gradients of `<D(A under La, B under Lb), F>` with
/// `D_ij = ||La a_i - Lb b_j||^2`, with respect to both metrics.
pub fn grad_cross_term(
    la: &DMatrix<f64>,
    a: &DMatrix<f64>,
    lb: &DMatrix<f64>,
    b: &DMatrix<f64>,
    coupling: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = la.nrows();
    let (da, db) = (la.ncols(), lb.ncols());
    let mut ga = DMatrix::zeros(k, da);
    let mut gb = DMatrix::zeros(k, db);
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            let f = coupling[(i, j)];
            if f == 0.0 {
                continue;
            }
            for r in 0..k {
                let mut w = 0.0;
                for t in 0..da {
                    w += la[(r, t)] * a[(i, t)];
                }
                for t in 0..db {
                    w -= lb[(r, t)] * b[(j, t)];
                }
                let scale = 2.0 * f * w;
                for t in 0..da {
                    ga[(r, t)] += scale * a[(i, t)];
                }
                for t in 0..db {
                    gb[(r, t)] -= scale * b[(j, t)];
                }
            }
        }
    }
    (ga, gb)
}

/// `(L^T L + eps I)^{-1/2}` by eigendecomposition of the explicitly
/// assembled Gram matrix.
pub fn oracle_surrogate(l: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let d = l.ncols();
    let mut gram = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for r in 0..l.nrows() {
                s += l[(r, i)] * l[(r, j)];
            }
            gram[(i, j)] = s;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut out = DMatrix::zeros(d, d);
    for t in 0..d {
        let lam = eig.eigenvalues[t].max(0.0) + eps;
        let col = eig.eigenvectors.column(t);
        let w = 1.0 / lam.sqrt();
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] += w * col[i] * col[j];
            }
        }
    }
    out
}

/// The frozen-plan transforming-stage subproblem around a previous iterate:
/// plans, hinge activity, and the trace-surrogate factors are all held at the
/// previous iterate; the objective is evaluated at candidate metrics.
pub struct FrozenTStage {
    pub prev: TStageState,
    pub pairs: Vec<TripletPair>,
    pub plan_sets: Vec<TermPlans>,
    pub gamma: f64,
    pub lambda: f64,
    pub rho: f64,
    pub sigma: f64,
    pub reg: Regularizer,
    pub ht_all: DMatrix<f64>,
    pub ht_surv: DMatrix<f64>,
}

impl FrozenTStage {
    pub fn new(
        prev: TStageState,
        pairs: Vec<TripletPair>,
        hp: &evometric::Hyperparams,
        reg: Regularizer,
    ) -> Self {
        let cfg = StageOptions::default().sinkhorn_config(hp);
        let plan_sets: Vec<TermPlans> = pairs
            .iter()
            .map(|p| solve_term_plans(&prev, p, &cfg).expect("plans solve"))
            .collect();
        let (ht_all, ht_surv) = match reg {
            Regularizer::TraceSurrogate => (
                oracle_surrogate(&prev.l_all.l, prev.l_all.ridge_eps),
                oracle_surrogate(&prev.l_surv.l, prev.l_surv.ridge_eps),
            ),
            Regularizer::Frobenius => (
                DMatrix::identity(prev.l_all.input_dim(), prev.l_all.input_dim()),
                DMatrix::identity(prev.l_surv.input_dim(), prev.l_surv.input_dim()),
            ),
        };
        FrozenTStage {
            prev,
            pairs,
            plan_sets,
            gamma: hp.gamma,
            lambda: hp.lambda,
            rho: hp.rho,
            sigma: hp.sigma,
            reg,
            ht_all,
            ht_surv,
        }
    }

    /// Frozen objective at candidate metrics (proximal + regularizer +
    /// active hinge brackets re-priced at the candidates).
    pub fn objective(&self, l_all: &DMatrix<f64>, l_surv: &DMatrix<f64>) -> f64 {
        let mut f = 0.5 * (l_all - &self.prev.l_all.l).norm_squared()
            + 0.5 * (l_surv - &self.prev.l_surv.l).norm_squared();
        f += 0.5 * self.lambda * (l_all * &self.ht_all * l_all.transpose()).trace();
        f += 0.5 * self.lambda * (l_surv * &self.ht_surv * l_surv.transpose()).trace();
        for (pair, plans) in self.pairs.iter().zip(&self.plan_sets) {
            let a = &pair.all;
            let s = &pair.surv;
            if plans.hinge_all().1 {
                let c1 = cost_same(l_all, &a.p.points, &a.q.points);
                let c2 = cost_same(l_all, &a.p.points, &a.k.points);
                f += 0.5
                    * self.gamma
                    * (1.0 + plan_value(&c1, &plans.pq_all.coupling, self.sigma)
                        - plan_value(&c2, &plans.pk_all.coupling, self.sigma));
            }
            if plans.hinge_surv().1 {
                let c1 = cost_same(l_surv, &s.p.points, &s.q.points);
                let c2 = cost_same(l_surv, &s.p.points, &s.k.points);
                f += 0.5
                    * self.gamma
                    * (1.0 + plan_value(&c1, &plans.pq_surv.coupling, self.sigma)
                        - plan_value(&c2, &plans.pk_surv.coupling, self.sigma));
            }
            if plans.hinge_cross_anchor_all().1 {
                let c1 = cost_cross(l_all, &a.p.points, l_surv, &s.q.points);
                let c2 = cost_cross(l_all, &a.p.points, l_surv, &s.k.points);
                f += 0.5
                    * self.rho
                    * (1.0 + plan_value(&c1, &plans.pq_all_surv.coupling, self.sigma)
                        - plan_value(&c2, &plans.pk_all_surv.coupling, self.sigma));
            }
            if plans.hinge_cross_anchor_surv().1 {
                let c1 = cost_cross(l_surv, &s.p.points, l_all, &a.q.points);
                let c2 = cost_cross(l_surv, &s.p.points, l_all, &a.k.points);
                f += 0.5
                    * self.rho
                    * (1.0 + plan_value(&c1, &plans.pq_surv_all.coupling, self.sigma)
                        - plan_value(&c2, &plans.pk_surv_all.coupling, self.sigma));
            }
        }
        f
    }

    /// Symbolic gradient of [`Self::objective`] with respect to the
    /// all-feature metric, at candidate metrics.
    pub fn grad_l_all(&self, l_all: &DMatrix<f64>, l_surv: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = l_all - &self.prev.l_all.l;
        g += self.lambda * l_all * &self.ht_all;
        for (pair, plans) in self.pairs.iter().zip(&self.plan_sets) {
            let a = &pair.all;
            let s = &pair.surv;
            if plans.hinge_all().1 {
                g += 0.5
                    * self.gamma
                    * (grad_same_term(l_all, &a.p.points, &a.q.points, &plans.pq_all.coupling)
                        - grad_same_term(l_all, &a.p.points, &a.k.points, &plans.pk_all.coupling));
            }
            if plans.hinge_cross_anchor_all().1 {
                let (g1, _) = grad_cross_term(
                    l_all,
                    &a.p.points,
                    l_surv,
                    &s.q.points,
                    &plans.pq_all_surv.coupling,
                );
                let (g2, _) = grad_cross_term(
                    l_all,
                    &a.p.points,
                    l_surv,
                    &s.k.points,
                    &plans.pk_all_surv.coupling,
                );
                g += 0.5 * self.rho * (g1 - g2);
            }
            if plans.hinge_cross_anchor_surv().1 {
                let (_, g1) = grad_cross_term(
                    l_surv,
                    &s.p.points,
                    l_all,
                    &a.q.points,
                    &plans.pq_surv_all.coupling,
                );
                let (_, g2) = grad_cross_term(
                    l_surv,
                    &s.p.points,
                    l_all,
                    &a.k.points,
                    &plans.pk_surv_all.coupling,
                );
                g += 0.5 * self.rho * (g1 - g2);
            }
        }
        g
    }

    /// Symbolic gradient with respect to the survived-feature metric.
    pub fn grad_l_surv(&self, l_all: &DMatrix<f64>, l_surv: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = l_surv - &self.prev.l_surv.l;
        g += self.lambda * l_surv * &self.ht_surv;
        for (pair, plans) in self.pairs.iter().zip(&self.plan_sets) {
            let a = &pair.all;
            let s = &pair.surv;
            if plans.hinge_surv().1 {
                g += 0.5
                    * self.gamma
                    * (grad_same_term(l_surv, &s.p.points, &s.q.points, &plans.pq_surv.coupling)
                        - grad_same_term(
                            l_surv,
                            &s.p.points,
                            &s.k.points,
                            &plans.pk_surv.coupling,
                        ));
            }
            if plans.hinge_cross_anchor_all().1 {
                let (_, g1) = grad_cross_term(
                    l_all,
                    &a.p.points,
                    l_surv,
                    &s.q.points,
                    &plans.pq_all_surv.coupling,
                );
                let (_, g2) = grad_cross_term(
                    l_all,
                    &a.p.points,
                    l_surv,
                    &s.k.points,
                    &plans.pk_all_surv.coupling,
                );
                g += 0.5 * self.rho * (g1 - g2);
            }
            if plans.hinge_cross_anchor_surv().1 {
                let (g1, _) = grad_cross_term(
                    l_surv,
                    &s.p.points,
                    l_all,
                    &a.q.points,
                    &plans.pq_surv_all.coupling,
                );
                let (g2, _) = grad_cross_term(
                    l_surv,
                    &s.p.points,
                    l_all,
                    &a.k.points,
                    &plans.pk_surv_all.coupling,
                );
                g += 0.5 * self.rho * (g1 - g2);
            }
        }
        g
    }

    /// Central finite-difference gradient with respect to the all-feature
    /// metric at candidate metrics.
    pub fn fd_grad_l_all(
        &self,
        l_all: &DMatrix<f64>,
        l_surv: &DMatrix<f64>,
        h: f64,
    ) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(l_all.nrows(), l_all.ncols());
        let mut probe = l_all.clone();
        for r in 0..l_all.nrows() {
            for c in 0..l_all.ncols() {
                let orig = probe[(r, c)];
                probe[(r, c)] = orig + h;
                let fp = self.objective(&probe, l_surv);
                probe[(r, c)] = orig - h;
                let fm = self.objective(&probe, l_surv);
                probe[(r, c)] = orig;
                g[(r, c)] = (fp - fm) / (2.0 * h);
            }
        }
        g
    }

    /// Central finite-difference gradient with respect to the
    /// survived-feature metric.
    pub fn fd_grad_l_surv(
        &self,
        l_all: &DMatrix<f64>,
        l_surv: &DMatrix<f64>,
        h: f64,
    ) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(l_surv.nrows(), l_surv.ncols());
        let mut probe = l_surv.clone();
        for r in 0..l_surv.nrows() {
            for c in 0..l_surv.ncols() {
                let orig = probe[(r, c)];
                probe[(r, c)] = orig + h;
                let fp = self.objective(l_all, &probe);
                probe[(r, c)] = orig - h;
                let fm = self.objective(l_all, &probe);
                probe[(r, c)] = orig;
                g[(r, c)] = (fp - fm) / (2.0 * h);
            }
        }
        g
    }
}

/// The frozen-plan inheriting-stage subproblem (single metric, same-space
/// hinges only).
pub struct FrozenIStage {
    pub prev: MetricState,
    pub triplets: Vec<SignatureTriplet>,
    pub plan_sets: Vec<IStagePlans>,
    pub gamma: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub ht: DMatrix<f64>,
}

impl FrozenIStage {
    pub fn new(
        prev: MetricState,
        triplets: Vec<SignatureTriplet>,
        hp: &evometric::Hyperparams,
        reg: Regularizer,
    ) -> Self {
        let cfg = StageOptions::default().sinkhorn_config(hp);
        let state = evometric::IStageState {
            l_z: prev.clone(),
            objective_trace: Vec::new(),
            converged: false,
        };
        let plan_sets: Vec<IStagePlans> = triplets
            .iter()
            .map(|t| evometric::solve_istage_plans(&state, t, &cfg).expect("plans solve"))
            .collect();
        let ht = match reg {
            Regularizer::TraceSurrogate => oracle_surrogate(&prev.l, prev.ridge_eps),
            Regularizer::Frobenius => DMatrix::identity(prev.input_dim(), prev.input_dim()),
        };
        FrozenIStage {
            prev,
            triplets,
            plan_sets,
            gamma: hp.gamma,
            lambda: hp.lambda,
            sigma: hp.sigma,
            ht,
        }
    }

    pub fn objective(&self, l: &DMatrix<f64>) -> f64 {
        let mut f = 0.5 * (l - &self.prev.l).norm_squared();
        f += 0.5 * self.lambda * (l * &self.ht * l.transpose()).trace();
        for (t, plans) in self.triplets.iter().zip(&self.plan_sets) {
            if plans.hinge().1 {
                let c1 = cost_same(l, &t.p.points, &t.q.points);
                let c2 = cost_same(l, &t.p.points, &t.k.points);
                f += 0.5
                    * self.gamma
                    * (1.0 + plan_value(&c1, &plans.pq.coupling, self.sigma)
                        - plan_value(&c2, &plans.pk.coupling, self.sigma));
            }
        }
        f
    }

    pub fn grad(&self, l: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = l - &self.prev.l;
        g += self.lambda * l * &self.ht;
        for (t, plans) in self.triplets.iter().zip(&self.plan_sets) {
            if plans.hinge().1 {
                g += 0.5
                    * self.gamma
                    * (grad_same_term(l, &t.p.points, &t.q.points, &plans.pq.coupling)
                        - grad_same_term(l, &t.p.points, &t.k.points, &plans.pk.coupling));
            }
        }
        g
    }

    pub fn fd_grad(&self, l: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(l.nrows(), l.ncols());
        let mut probe = l.clone();
        for r in 0..l.nrows() {
            for c in 0..l.ncols() {
                let orig = probe[(r, c)];
                probe[(r, c)] = orig + h;
                let fp = self.objective(&probe);
                probe[(r, c)] = orig - h;
                let fm = self.objective(&probe);
                probe[(r, c)] = orig;
                g[(r, c)] = (fp - fm) / (2.0 * h);
            }
        }
        g
    }
}

/// Solves `grad(L) = 0` for a gradient that is affine in `L` by probing
/// basis matrices to assemble the vectorized linear system, then factoring
/// it with a generic LU. Nothing here depends on how the library rearranges
/// the stationarity condition into its closed form.
pub fn solve_affine_root<F>(rows: usize, cols: usize, grad: F) -> DMatrix<f64>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let n = rows * cols;
    let g0 = grad(&DMatrix::zeros(rows, cols));
    let mut a = DMatrix::zeros(n, n);
    for c in 0..cols {
        for r in 0..rows {
            let mut e = DMatrix::zeros(rows, cols);
            e[(r, c)] = 1.0;
            let gi = grad(&e) - &g0;
            let idx = c * rows + r;
            for cc in 0..cols {
                for rr in 0..rows {
                    a[(cc * rows + rr, idx)] = gi[(rr, cc)];
                }
            }
        }
    }
    let b = DVector::from_fn(n, |i, _| -g0[(i % rows, i / rows)]);
    let x = a
        .lu()
        .solve(&b)
        .expect("stationarity system is nonsingular");
    DMatrix::from_fn(rows, cols, |r, c| x[c * rows + r])
}

/// Max absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// One-dimensional grid-search oracle for the 2x2 entropic transport value.
///
/// A 2x2 coupling with marginals `(p0, p1)` and `(q0, q1)` has one degree of
/// freedom `t = F_00` on `[max(0, p0 - q1), min(p0, q0)]`; the oracle scans
/// a coarse grid then refines around the coarse argmin.
pub fn grid_oracle_2x2(cost: &DMatrix<f64>, p: (f64, f64), q: (f64, f64), sigma: f64) -> f64 {
    assert_eq!((cost.nrows(), cost.ncols()), (2, 2));
    let lo = (p.0 - q.1).max(0.0);
    let hi = p.0.min(q.0);
    let value = |t: f64| -> f64 {
        let f = [t, p.0 - t, q.0 - t, p.1 - (q.0 - t)];
        let c = [cost[(0, 0)], cost[(0, 1)], cost[(1, 0)], cost[(1, 1)]];
        let mut v = 0.0;
        for (fi, ci) in f.iter().zip(&c) {
            if *fi > 0.0 {
                v += fi * (ci + sigma * fi.ln());
            }
        }
        v
    };
    if hi - lo < 1e-12 {
        return value(lo);
    }
    let coarse_step = (hi - lo) / 10_000.0;
    let mut best_t = lo;
    let mut best_v = f64::INFINITY;
    let mut t = lo;
    while t <= hi + coarse_step * 0.5 {
        let v = value(t.min(hi));
        if v < best_v {
            best_v = v;
            best_t = t.min(hi);
        }
        t += coarse_step;
    }
    let fine_lo = (best_t - 2.0 * coarse_step).max(lo);
    let fine_hi = (best_t + 2.0 * coarse_step).min(hi);
    let fine_step = (hi - lo) / 10_000_000.0;
    let mut t = fine_lo;
    while t <= fine_hi + fine_step * 0.5 {
        let v = value(t.min(fine_hi));
        if v < best_v {
            best_v = v;
        }
        t += fine_step;
    }
    best_v
}

/// A random transforming-stage snapshot with every loss term switched on:
/// a metric pair, sample-aligned triplet pairs, and hyper-parameters.
pub struct TInstance {
    pub state: TStageState,
    pub pairs: Vec<TripletPair>,
    pub hp: evometric::Hyperparams,
}

pub fn rand_tstage_instance(seed: u64) -> TInstance {
    let mut r = rng(seed);
    let k = 2 + (r.gen::<u64>() % 2) as usize;
    let d_v = 1 + (r.gen::<u64>() % 3) as usize;
    let d_s = k + (r.gen::<u64>() % 3) as usize;
    let d = d_v + d_s;
    let l_all = MetricState::new(rand_matrix(&mut r, k, d), evometric::DEFAULT_RIDGE_EPS)
        .expect("random metric");
    let l_surv = MetricState::new(rand_matrix(&mut r, k, d_s), evometric::DEFAULT_RIDGE_EPS)
        .expect("random metric");
    let state = TStageState::new(l_all, l_surv).expect("shared embedding width");
    let n_pairs = 1 + (r.gen::<u64>() % 3) as usize;
    let mut pairs = Vec::new();
    for t in 0..n_pairs {
        let n = 2 + (r.gen::<u64>() % 3) as usize;
        let all = SignatureTriplet {
            p: rand_signature_scaled(&mut r, n, d, 0.5),
            q: rand_signature_scaled(&mut r, n, d, 0.5),
            k: rand_signature_scaled(&mut r, n, d, 0.5),
            anchor_class: 0,
            negative_class: 1 + t % 2,
        };
        pairs.push(TripletPair::project(&all, d_v..d).expect("projection"));
    }
    let hp = evometric::Hyperparams {
        gamma: 0.05,
        lambda: 0.05,
        rho: 0.03,
        sigma: 0.1,
        ..Default::default()
    };
    TInstance { state, pairs, hp }
}

/// A random inheriting-stage snapshot: one stacked-space metric plus
/// triplets.
pub struct IInstance {
    pub state: evometric::IStageState,
    pub triplets: Vec<SignatureTriplet>,
    pub hp: evometric::Hyperparams,
}

pub fn rand_istage_instance(seed: u64) -> IInstance {
    let mut r = rng(seed);
    let k = 2 + (r.gen::<u64>() % 2) as usize;
    let d_z = k + 1 + (r.gen::<u64>() % 3) as usize;
    let l_z = MetricState::new(rand_matrix(&mut r, k, d_z), evometric::DEFAULT_RIDGE_EPS)
        .expect("random metric");
    let state = evometric::IStageState {
        l_z,
        objective_trace: Vec::new(),
        converged: false,
    };
    let n_triplets = 1 + (r.gen::<u64>() % 3) as usize;
    let mut triplets = Vec::new();
    for t in 0..n_triplets {
        let n = 2 + (r.gen::<u64>() % 3) as usize;
        triplets.push(SignatureTriplet {
            p: rand_signature_scaled(&mut r, n, d_z, 0.5),
            q: rand_signature_scaled(&mut r, n, d_z, 0.5),
            k: rand_signature_scaled(&mut r, n, d_z, 0.5),
            anchor_class: 0,
            negative_class: 1 + t % 2,
        });
    }
    let hp = evometric::Hyperparams {
        gamma: 0.05,
        lambda: 0.05,
        rho: 0.03,
        sigma: 0.1,
        ..Default::default()
    };
    IInstance { state, triplets, hp }
}

/// Solves one same-space transport problem with the production solver.
pub fn solve_plan(
    l: &MetricState,
    src: &Signature,
    tgt: &Signature,
    cfg: &SinkhornConfig,
) -> evometric::TransportPlan {
    sinkhorn(
        &ground_cost(l, src, tgt).expect("cost"),
        &src.weights,
        &tgt.weights,
        cfg,
    )
    .expect("sinkhorn")
}
