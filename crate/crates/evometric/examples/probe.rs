//! Scratch probe for acceptance tuning; not part of the deliverable.

use evometric::{
    one_shot_variant, EvalConfig, Hyperparams, SyntheticSpec, TripletConfig, VariantKind,
};
use rayon::prelude::*;
use std::time::Instant;

#[derive(Clone)]
struct Cfg {
    label: &'static str,
    spec: SyntheticSpec,
    hp: Hyperparams,
    tcfg: TripletConfig,
}

fn family_a(sep: f64, info_sd: f64, aug_sd: f64, clusters: usize, inner: usize) -> (SyntheticSpec, usize) {
    let mut noise = vec![info_sd; 25];
    for s in noise[15..].iter_mut() {
        *s = aug_sd;
    }
    (SyntheticSpec {
        classes: 3,
        d_v: 5,
        d_s: 10,
        d_n: 10,
        separation: sep,
        n_batches: 5,
        batch_size: 48,
        seed: 0,
        clusters_per_class: clusters,
        centroid_rank: None,
        noise_scales: Some(noise),
        class_mean_centering: 0.0,
    }, inner)
}

fn family_b2(sep: f64, sd: f64, rank: usize, d: (usize, usize, usize)) -> SyntheticSpec {
    SyntheticSpec {
        classes: 3,
        d_v: d.0,
        d_s: d.1,
        d_n: d.2,
        separation: sep,
        n_batches: 5,
        batch_size: 48,
        seed: 0,
        clusters_per_class: 1,
        centroid_rank: Some(rank),
        noise_scales: Some(vec![sd; d.0 + d.1 + d.2]),
        class_mean_centering: 0.0,
    }
}

fn family_b(sep: f64, sd: f64, rank: usize) -> SyntheticSpec {
    SyntheticSpec {
        classes: 3,
        d_v: 5,
        d_s: 10,
        d_n: 8,
        separation: sep,
        n_batches: 5,
        batch_size: 48,
        seed: 0,
        clusters_per_class: 1,
        centroid_rank: Some(rank),
        noise_scales: Some(vec![sd; 23]),
        class_mean_centering: 0.0,
    }
}

fn hp(gamma: f64, lambda: f64, rho: f64, sigma: f64) -> Hyperparams {
    Hyperparams {
        gamma,
        lambda,
        rho,
        sigma,
        rank_k: 32,
        inner_iters: 20,
        ..Default::default()
    }
}

fn tcfg(n: usize, triplets: usize) -> TripletConfig {
    TripletConfig {
        n_p: n,
        n_q: n,
        n_k: n,
        triplets_per_batch: triplets,
        rng_seed: 0,
    }
}

fn run(cfg: &Cfg, variant: VariantKind, seed: u64) -> Result<f64, String> {
    let mut spec = cfg.spec.clone();
    spec.seed = spec.seed.wrapping_add(seed);
    let stream = evometric::synthetic_stream_from_spec(&spec).map_err(|e| e.to_string())?;
    let t = cfg.tcfg.with_seed(seed);
    one_shot_variant(variant, &stream, &cfg.hp, &t, &EvalConfig::default())
        .map(|r| r.accuracy_mean)
        .map_err(|e| e.to_string())
}

fn scan(cfg: &Cfg, variants: &[VariantKind], seeds: u64) {
    let t0 = Instant::now();
    let rows: Vec<Vec<Result<f64, String>>> = (0..seeds)
        .into_par_iter()
        .map(|s| variants.iter().map(|&v| run(cfg, v, s)).collect())
        .collect();
    let mut line = format!("{:<28}", cfg.label);
    for (i, &v) in variants.iter().enumerate() {
        let oks: Vec<f64> = rows.iter().filter_map(|r| r[i].clone().ok()).collect();
        let errs = rows.len() - oks.len();
        let mean = if oks.is_empty() {
            f64::NAN
        } else {
            oks.iter().sum::<f64>() / oks.len() as f64
        };
        line.push_str(&format!(" {v}={mean:.4}"));
        if errs > 0 {
            line.push_str(&format!("({errs}err)"));
        }
    }
    line.push_str(&format!("  [{:.1}s]", t0.elapsed().as_secs_f64()));
    if let Some(err) = rows
        .iter()
        .flat_map(|r| r.iter())
        .find_map(|r| r.as_ref().err())
    {
        line.push_str(&format!("  first err: {err}"));
    }
    println!("{line}");
}

fn main() {
    let a_variants = [
        VariantKind::Full,
        VariantKind::CollapseSignatures,
        VariantKind::SkipInheritingStage,
    ];

    for (label, junk, seeds) in [
        ("J1 c.55 j.54", 0.54, 20),
        ("J2 c.55 j.57", 0.57, 20),
        ("J3 c.55 j.60", 0.60, 20),
    ] {
        let mut noise = vec![0.1; 36];
        for v in noise[20..].iter_mut() {
            *v = junk;
        }
        let spec = SyntheticSpec {
            classes: 3,
            d_v: 5,
            d_s: 15,
            d_n: 16,
            separation: 0.5,
            n_batches: 5,
            batch_size: 48,
            seed: 0,
            clusters_per_class: 2,
            centroid_rank: None,
            noise_scales: Some(noise),
            class_mean_centering: 0.55,
        };
        let mut h = hp(0.07, 0.010, 0.005, 0.05);
        h.inner_iters = 60;
        h.converge_delta = 1e-9;
        let cfg = Cfg { label, spec, hp: h, tcfg: tcfg(5, 16) };
        scan(&cfg, &a_variants, seeds);
    }
}
