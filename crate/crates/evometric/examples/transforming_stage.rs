//! The transforming stage: learn a metric over vanished + survived features
//! while features are still complete, and carry a survived-only metric out
//! of the process for the batches that lose the vanished block.
//!
//! Run with `cargo run --example transforming_stage`.

use evometric::{
    make_synthetic_stream, run_tstage, trace_norm, Hyperparams, TripletConfig,
};

fn main() -> evometric::Result<()> {
    // Transforming-view batches: 4 vanished + 8 survived columns.
    let stream = make_synthetic_stream(3, (4, 8, 3), 2.0, 5, 48, 7)?;
    let transforming = &stream[..stream.len() - 2];
    println!("training on {} transforming batches", transforming.len());

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

    let state = run_tstage(transforming, &hp, &tcfg)?;
    println!(
        "learned metrics: all-feature {}x{}, survived-only {}x{}",
        state.l_all.embed_dim(),
        state.l_all.input_dim(),
        state.l_surv.embed_dim(),
        state.l_surv.input_dim()
    );
    println!(
        "trace norms: all {:.3}, survived {:.3}",
        trace_norm(&state.l_all.l)?,
        trace_norm(&state.l_surv.l)?
    );
    println!("converged on the last batch: {}", state.converged);

    // The objective trace concatenates one segment per batch; each segment
    // should fall from its first to its last entry.
    println!("\nper-batch objective descent:");
    for (b, window) in state
        .trace_offsets
        .iter()
        .zip(state.trace_offsets.iter().skip(1).chain(std::iter::once(&state.objective_trace.len())))
        .enumerate()
    {
        let seg = &state.objective_trace[*window.0..*window.1];
        if let (Some(first), Some(last)) = (seg.first(), seg.last()) {
            println!(
                "  batch {b}: {first:.5} -> {last:.5} over {} evaluations",
                seg.len()
            );
        }
    }
    Ok(())
}
