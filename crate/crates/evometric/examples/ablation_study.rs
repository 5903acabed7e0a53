//! Ablation variants on one stream: the full pipeline against collapsed
//! signatures, skipped stages, and the Frobenius regularizer, averaged over
//! a few seeds.
//!
//! Run with `cargo run --example ablation_study`.

use evometric::{
    aggregate_runs, one_shot_variant, EvalConfig, Hyperparams, SyntheticSpec, TripletConfig,
    VariantKind,
};

fn main() -> evometric::Result<()> {
    let base = SyntheticSpec {
        classes: 3,
        d_v: 4,
        d_s: 8,
        d_n: 6,
        separation: 1.0,
        n_batches: 5,
        batch_size: 48,
        seed: 0,
        clusters_per_class: 2,
        noise_scales: Some(
            std::iter::repeat(0.1)
                .take(12)
                .chain(std::iter::repeat(0.4).take(6))
                .collect(),
        ),
        ..Default::default()
    };
    let hp = Hyperparams {
        gamma: 0.08,
        lambda: 0.01,
        rho: 0.005,
        sigma: 0.1,
        rank_k: 16,
        inner_iters: 15,
        ..Default::default()
    };
    let tcfg = TripletConfig {
        n_p: 4,
        n_q: 4,
        n_k: 4,
        triplets_per_batch: 12,
        rng_seed: 0,
    };
    let eval_cfg = EvalConfig::default();
    let seeds = 5u64;

    println!("{:<22} {:>10} {:>8}", "variant", "accuracy", "sd");
    for variant in [
        VariantKind::Full,
        VariantKind::CollapseSignatures,
        VariantKind::SkipTransformingStage,
        VariantKind::SkipInheritingStage,
        VariantKind::FrobeniusPenalty,
    ] {
        let mut reports = Vec::new();
        for seed in 0..seeds {
            let mut spec = base.clone();
            spec.seed = seed;
            let stream = evometric::synthetic_stream_from_spec(&spec)?;
            reports.push(one_shot_variant(
                variant,
                &stream,
                &hp,
                &tcfg.with_seed(seed),
                &eval_cfg,
            )?);
        }
        let agg = aggregate_runs(&reports)?;
        println!(
            "{:<22} {:>10.4} {:>8.4}",
            variant.tag(),
            agg.accuracy_mean,
            agg.accuracy_sd
        );
    }
    println!("\n({} seeds per row; tighten conclusions with more)", seeds);
    Ok(())
}
