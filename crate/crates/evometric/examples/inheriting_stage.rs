//! The inheriting stage: stack survived features (through the transforming
//! metric) with newly arrived columns, learn a metric over the stacked
//! space, and classify a held-out batch with it.
//!
//! Run with `cargo run --example inheriting_stage`.

use evometric::{
    accuracy, knn_predict, make_synthetic_stream, run_istage, run_tstage, stack_batch,
    Hyperparams, TripletConfig,
};

fn main() -> evometric::Result<()> {
    // Feature change: 4 columns vanish, 8 survive, 3 appear. The last two
    // batches hold the inheriting view.
    let stream = make_synthetic_stream(3, (4, 8, 3), 2.5, 5, 48, 3)?;
    let split = stream.len() - 2;
    let (transforming, inheriting) = stream.split_at(split);

    let hp = Hyperparams {
        gamma: 0.08,
        lambda: 0.01,
        rho: 0.005,
        sigma: 0.1,
        rank_k: 12,
        inner_iters: 15,
        ..Default::default()
    };
    let tcfg = TripletConfig {
        n_p: 4,
        n_q: 4,
        n_k: 4,
        triplets_per_batch: 10,
        rng_seed: 1,
    };

    let tstate = run_tstage(transforming, &hp, &tcfg)?;
    println!(
        "transforming stage done; survived-only metric is {}x{}",
        tstate.l_surv.embed_dim(),
        tstate.l_surv.input_dim()
    );

    // Stack the training batch: survived columns go through the survived
    // metric, new columns pass through unchanged.
    let train = stack_batch(&inheriting[0], &tstate.l_surv)?;
    println!(
        "stacked space: {} columns ({} embedded + {} new)",
        train.z.ncols(),
        tstate.l_surv.embed_dim(),
        inheriting[0].layout.d_n()
    );

    let istate = run_istage(&train, &hp, &tcfg, None)?;
    println!(
        "inheriting stage converged: {} ({} objective evaluations)",
        istate.converged,
        istate.objective_trace.len()
    );
    if let (Some(first), Some(last)) = (istate.objective_trace.first(), istate.objective_trace.last()) {
        println!("objective: {first:.5} -> {last:.5}");
    }

    // Score the final batch under the stacked metric, against the identity
    // baseline of the same stacked space.
    let test = stack_batch(&inheriting[1], &tstate.l_surv)?;
    let learned = accuracy(&knn_predict(&train, &test, &istate.l_z, 1)?, &test.labels)?;
    let ident = evometric::MetricState::truncated_identity(
        istate.l_z.embed_dim(),
        train.z.ncols(),
        1e-8,
    )?;
    let baseline = accuracy(&knn_predict(&train, &test, &ident, 1)?, &test.labels)?;
    println!("\naccuracy: learned {learned:.3} vs identity {baseline:.3}");

    // Warm starts resume where a previous run stopped, which is how the
    // multi-shot driver chains episodes.
    let resumed = run_istage(&train, &hp, &tcfg, Some(istate.l_z.clone()))?;
    println!(
        "warm start picks up at {:.5} (cold ended at {:.5})",
        resumed.objective_trace.first().copied().unwrap_or(f64::NAN),
        istate.objective_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}
