//! Low-level metric machinery: squared distances under a learned factor,
//! the margin hinge, and the closed-form passive-aggressive step that pulls
//! a similar pair together while pushing a dissimilar one apart.
//!
//! Run with `cargo run --example metric_updates`.

use evometric::{hinge_triplet, pa_mahalanobis_update, trace_norm, MetricState};
use nalgebra::{DMatrix, DVector};

fn main() -> evometric::Result<()> {
    // Three points: p and q belong together, k does not. Under the identity
    // metric k sits closer to p than q does, which is exactly the situation
    // the update is meant to repair.
    let p = DVector::from_vec(vec![0.0, 0.0]);
    let q = DVector::from_vec(vec![2.0, 0.0]);
    let k = DVector::from_vec(vec![0.0, 1.0]);

    let ident = MetricState::new(DMatrix::identity(2, 2), 1e-8)?;
    let d_pq = ident.sq_distance(&p, &q);
    let d_pk = ident.sq_distance(&p, &k);
    let (hinge, active) = hinge_triplet(d_pq, d_pk);
    println!("identity metric: d(p,q) = {d_pq:.2}, d(p,k) = {d_pk:.2}");
    println!("margin hinge = {hinge:.2} (active: {active})");

    // One passive-aggressive step. Larger steps repair the violation faster
    // but distort the factor more; the trace norm tracks that distortion.
    println!("\n{:>10} {:>10} {:>10} {:>12}", "step", "d(p,q)", "d(p,k)", "trace norm");
    for gamma in [0.05, 0.1, 0.2] {
        let updated = pa_mahalanobis_update(&ident, &p, &q, &k, gamma)?;
        println!(
            "{gamma:>10} {:>10.3} {:>10.3} {:>12.3}",
            updated.sq_distance(&p, &q),
            updated.sq_distance(&p, &k),
            trace_norm(&updated.l)?
        );
    }

    // Iterating the step drives the violation down until the hinge
    // deactivates and the metric stops moving.
    let mut state = ident;
    for round in 1..=40 {
        let next = pa_mahalanobis_update(&state, &p, &q, &k, 0.1)?;
        let (h, act) = hinge_triplet(next.sq_distance(&p, &q), next.sq_distance(&p, &k));
        state = next;
        if !act || round == 40 {
            println!("\nafter {round} rounds: hinge = {h:.4} (active: {act})");
            break;
        }
    }
    Ok(())
}
