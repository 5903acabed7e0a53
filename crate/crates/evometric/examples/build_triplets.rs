//! Triplet construction over a labeled batch: signature sizes, class roles,
//! determinism under a fixed seed, and the column projections the
//! transforming stage derives from each triplet.
//!
//! Run with `cargo run --example build_triplets`.

use evometric::{build_triplets, project_triplet, make_synthetic_stream, TripletConfig};

fn main() -> evometric::Result<()> {
    let stream = make_synthetic_stream(3, (4, 6, 3), 3.0, 4, 30, 42)?;
    let batch = &stream[0];
    println!(
        "batch 0: {} samples, {} columns ({} vanished + {} survived)",
        batch.x.nrows(),
        batch.x.ncols(),
        batch.layout.d_v(),
        batch.layout.d_s()
    );

    let cfg = TripletConfig {
        n_p: 4,
        n_q: 4,
        n_k: 4,
        triplets_per_batch: 6,
        rng_seed: 9,
    };
    let triplets = build_triplets(batch, &cfg)?;
    println!("\ndrew {} triplets:", triplets.len());
    for (i, t) in triplets.iter().enumerate() {
        println!(
            "  #{i}: anchor class {} ({} + {} points), negative class {} ({} points)",
            t.anchor_class,
            t.p.len(),
            t.q.len(),
            t.negative_class,
            t.k.len()
        );
    }

    // Same batch, same seed, same triplets; a different seed redraws them.
    let again = build_triplets(batch, &cfg)?;
    assert_eq!(triplets, again);
    let redrawn = build_triplets(batch, &cfg.with_seed(10))?;
    println!(
        "\nsame seed reproduces the draw exactly; seed 10 redraws (first anchor {} -> {})",
        triplets[0].anchor_class, redrawn[0].anchor_class
    );

    // The transforming stage scores each triplet twice: once on all columns,
    // once restricted to the survived block.
    let t = &triplets[0];
    let full_width = batch.layout.width();
    let surv = project_triplet(t, batch.layout.survived.clone())?;
    println!(
        "projection: all-feature signatures are {full_width}-dimensional, survived-only are {}",
        surv.p.dim()
    );

    // Collapsing replaces each signature by its barycenter.
    let collapsed = t.collapse();
    println!(
        "collapsed: P went from {} points to {}, mass {:.2}",
        t.p.len(),
        collapsed.p.len(),
        collapsed.p.weights[0]
    );
    Ok(())
}
