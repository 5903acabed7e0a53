//! Multi-shot evolution: a stream whose features change twice, evaluated
//! both ways; one accuracy on the final batch, or one accuracy per stage
//! with the learned metrics chained forward.
//!
//! Run with `cargo run --example multi_shot_tasks`.

use evometric::{
    make_multi_shot_stream, run_multi_shot, EvalConfig, Hyperparams, TaskKind, TripletConfig,
};

fn main() -> evometric::Result<()> {
    // Four feature blocks produce M = 2 evolutions across 3 stages; adjacent
    // stages share one block, so every change keeps some columns alive.
    let (stream, schedule) = make_multi_shot_stream(3, &[5, 6, 5, 4], 4.0, 3, 45, 29)?;
    println!(
        "{} evolutions, {} stages, {} batches total",
        schedule.shots,
        schedule.shots + 1,
        stream.len()
    );
    for (s, layout) in schedule.layout_per_stage.iter().enumerate() {
        println!(
            "  stage {s}: {} batches of {} columns ({} vanished / {} survived / {} augmented)",
            schedule.batches_per_stage[s],
            layout.width(),
            layout.d_v(),
            layout.d_s(),
            layout.d_n()
        );
    }

    let hp = Hyperparams {
        gamma: 0.08,
        lambda: 0.01,
        rho: 0.005,
        sigma: 0.1,
        rank_k: 12,
        inner_iters: 12,
        ..Default::default()
    };
    let tcfg = TripletConfig {
        n_p: 4,
        n_q: 4,
        n_k: 4,
        triplets_per_batch: 10,
        rng_seed: 2,
    };
    let eval_cfg = EvalConfig::default();

    let final_batch = run_multi_shot(&stream, &schedule, &hp, &tcfg, &eval_cfg, TaskKind::FinalBatch)?;
    println!("\nfinal-batch accuracy: {:.4}", final_batch.accuracy_mean);

    let per_stage = run_multi_shot(&stream, &schedule, &hp, &tcfg, &eval_cfg, TaskKind::PerStage)?;
    let stages = per_stage.stage_accuracies.as_ref().expect("per-stage task");
    println!("per-stage accuracies:");
    for (s, acc) in stages.iter().enumerate() {
        println!("  stage {s}: {acc:.4}");
    }
    println!("mean over stages: {:.4}", per_stage.accuracy_mean);
    Ok(())
}
