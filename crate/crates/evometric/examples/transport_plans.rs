//! Smoothed transport between weighted point sets: build two signatures,
//! price their ground costs under a metric, solve for the coupling, and
//! watch the smoothing weight trade sharpness for speed.
//!
//! Run with `cargo run --example transport_plans`.

use evometric::{ground_cost, sinkhorn, MetricState, Signature, SinkhornConfig};
use nalgebra::{DMatrix, DVector};

fn main() -> evometric::Result<()> {
    // Two small signatures in the plane. The source holds three points with
    // lopsided masses; the target holds two equally weighted points.
    let src = Signature::new(
        DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]),
        DVector::from_vec(vec![0.5, 0.25, 0.25]),
    )?;
    let tgt = Signature::uniform(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]))?;

    // Price moves with the identity metric: costs are plain squared
    // Euclidean distances.
    let l = MetricState::new(DMatrix::identity(2, 2), 1e-8)?;
    let cost = ground_cost(&l, &src, &tgt)?;
    println!("ground costs ({}x{}):", cost.values.nrows(), cost.values.ncols());
    for i in 0..cost.values.nrows() {
        let row: Vec<String> = (0..cost.values.ncols())
            .map(|j| format!("{:6.2}", cost.values[(i, j)]))
            .collect();
        println!("  [{}]", row.join(", "));
    }

    for sigma in [0.05, 0.1, 1.0] {
        let cfg = SinkhornConfig { sigma, ..Default::default() };
        let plan = sinkhorn(&cost, &src.weights, &tgt.weights, &cfg)?;
        println!(
            "\nsigma = {sigma}: value {:.4}, {} sweeps, residual {:.2e}, converged {}",
            plan.value, plan.iterations_used, plan.marginal_residual, plan.converged
        );
        for i in 0..plan.coupling.nrows() {
            let row: Vec<String> = (0..plan.coupling.ncols())
                .map(|j| format!("{:.4}", plan.coupling[(i, j)]))
                .collect();
            println!("  [{}]", row.join(", "));
        }
    }

    // A stretched metric reprices the same moves: doubling the second axis
    // makes vertical transport four times as expensive and the optimal
    // coupling shifts mass accordingly.
    let stretched = MetricState::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
        1e-8,
    )?;
    let cost2 = ground_cost(&stretched, &src, &tgt)?;
    let plan2 = sinkhorn(&cost2, &src.weights, &tgt.weights, &SinkhornConfig::default())?;
    println!("\nstretched metric: value {:.4} (identity gave a cheaper plan)", plan2.value);

    Ok(())
}
