//! Construction of signature triplets (P, Q, K) from labeled batches.
//!
//! P and Q are drawn from one class, K from a different one; each signature
//! carries uniform weights. Triplets over the full feature view and over a
//! column restriction stay sample-aligned through [`project_triplet`].

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::StreamBatch;
use crate::error::{Error, Result};
use crate::transport::Signature;

/// A (P, Q, K) triplet: P and Q share `anchor_class`, K carries
/// `negative_class`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureTriplet {
    pub p: Signature,
    pub q: Signature,
    pub k: Signature,
    pub anchor_class: usize,
    pub negative_class: usize,
}

impl SignatureTriplet {
    /// Collapses all three signatures to their barycenters; used by the
    /// plain-Mahalanobis ablation.
    pub fn collapse(&self) -> SignatureTriplet {
        SignatureTriplet {
            p: self.p.barycenter(),
            q: self.q.barycenter(),
            k: self.k.barycenter(),
            anchor_class: self.anchor_class,
            negative_class: self.negative_class,
        }
    }
}

/// Sizes and seeding for triplet construction.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripletConfig {
    pub n_p: usize,
    pub n_q: usize,
    pub n_k: usize,
    pub triplets_per_batch: usize,
    pub rng_seed: u64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig {
            n_p: 5,
            n_q: 5,
            n_k: 5,
            triplets_per_batch: 20,
            rng_seed: 0,
        }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_p", self.n_p),
            ("n_q", self.n_q),
            ("n_k", self.n_k),
            ("triplets_per_batch", self.triplets_per_batch),
        ] {
            if v == 0 {
                return Err(Error::Validation(format!(
                    "triplets.{name} must be >= 1"
                )));
            }
        }
        Ok(())
    }

    /// Copy with a different seed; stage loops derive one seed per batch.
    pub fn with_seed(&self, seed: u64) -> TripletConfig {
        TripletConfig {
            rng_seed: seed,
            ..*self
        }
    }
}

/// Draws `triplets_per_batch` triplets from a labeled batch.
///
/// The anchor class is uniform over the batch's classes and the negative
/// class uniform over the rest; samples are drawn without replacement within
/// each signature. The output is a pure function of `(batch, cfg)`.
pub fn build_triplets(batch: &StreamBatch, cfg: &TripletConfig) -> Result<Vec<SignatureTriplet>> {
    build_triplets_from(&batch.x, &batch.y, cfg)
}

/// As [`build_triplets`], from a raw sample matrix and label vector.
pub fn build_triplets_from(
    x: &DMatrix<f64>,
    y: &[usize],
    cfg: &TripletConfig,
) -> Result<Vec<SignatureTriplet>> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let mut pools: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, label) in y.iter().enumerate() {
        pools.entry(*label).or_default().push(i);
    }
    if pools.len() < 2 {
        return Err(Error::Infeasible(
            "triplet construction needs at least two classes in the batch".into(),
        ));
    }
    let needed = cfg.n_p.max(cfg.n_q).max(cfg.n_k);
    for (label, pool) in &pools {
        if pool.len() < needed {
            return Err(Error::Infeasible(format!(
                "class {label} has {} samples but signatures need {needed}",
                pool.len()
            )));
        }
    }

    let classes: Vec<usize> = pools.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut out = Vec::with_capacity(cfg.triplets_per_batch);
    for _ in 0..cfg.triplets_per_batch {
        let anchor_pos = rand::Rng::gen_range(&mut rng, 0..classes.len());
        let mut neg_pos = rand::Rng::gen_range(&mut rng, 0..classes.len() - 1);
        if neg_pos >= anchor_pos {
            neg_pos += 1;
        }
        let anchor_class = classes[anchor_pos];
        let negative_class = classes[neg_pos];
        let p = draw_signature(x, &pools[&anchor_class], cfg.n_p, &mut rng);
        let q = draw_signature(x, &pools[&anchor_class], cfg.n_q, &mut rng);
        let k = draw_signature(x, &pools[&negative_class], cfg.n_k, &mut rng);
        out.push(SignatureTriplet {
            p,
            q,
            k,
            anchor_class,
            negative_class,
        });
    }
    Ok(out)
}

fn draw_signature(
    x: &DMatrix<f64>,
    pool: &[usize],
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Signature {
    let picks = rand::seq::index::sample(rng, pool.len(), m);
    let rows: Vec<_> = picks.iter().map(|i| x.row(pool[i]).into_owned()).collect();
    let points = DMatrix::from_rows(&rows);
    Signature::uniform(points).expect("uniform weights over >= 1 rows are valid")
}

/// Restricts every signature of the triplet to the given columns, keeping
/// sample order and weights identical.
pub fn project_triplet(t: &SignatureTriplet, columns: Range<usize>) -> Result<SignatureTriplet> {
    Ok(SignatureTriplet {
        p: t.p.restrict_columns(columns.clone())?,
        q: t.q.restrict_columns(columns.clone())?,
        k: t.k.restrict_columns(columns)?,
        anchor_class: t.anchor_class,
        negative_class: t.negative_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class_matrix() -> (DMatrix<f64>, Vec<usize>) {
        let x = DMatrix::from_row_slice(
            4,
            2,
            &[0.0, 0.1, 0.2, 0.3, 5.0, 5.1, 5.2, 5.3],
        );
        (x, vec![0, 0, 1, 1])
    }

    #[test]
    fn forced_two_class_assignment() {
        let (x, y) = two_class_matrix();
        let cfg = TripletConfig {
            n_p: 1,
            n_q: 1,
            n_k: 1,
            triplets_per_batch: 8,
            rng_seed: 3,
        };
        for t in build_triplets_from(&x, &y, &cfg).unwrap() {
            assert_ne!(t.anchor_class, t.negative_class);
            assert_eq!(t.p.len(), 1);
            assert_eq!(t.q.len(), 1);
            assert_eq!(t.k.len(), 1);
        }
    }

    #[test]
    fn determinism_same_seed() {
        let (x, y) = two_class_matrix();
        let cfg = TripletConfig {
            n_p: 2,
            n_q: 2,
            n_k: 2,
            triplets_per_batch: 5,
            rng_seed: 42,
        };
        let a = build_triplets_from(&x, &y, &cfg).unwrap();
        let b = build_triplets_from(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_infeasible() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = vec![0, 0];
        assert!(matches!(
            build_triplets_from(&x, &y, &TripletConfig::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn small_class_is_named() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let y = vec![0, 0, 7];
        let cfg = TripletConfig {
            n_p: 2,
            n_q: 2,
            n_k: 2,
            triplets_per_batch: 1,
            rng_seed: 0,
        };
        match build_triplets_from(&x, &y, &cfg) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("class 7")),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn projection_identity_and_composition() {
        let (x, y) = two_class_matrix();
        let cfg = TripletConfig {
            n_p: 2,
            n_q: 1,
            n_k: 2,
            triplets_per_batch: 1,
            rng_seed: 9,
        };
        let t = &build_triplets_from(&x, &y, &cfg).unwrap()[0];
        let full = project_triplet(t, 0..2).unwrap();
        assert_eq!(&full, t);
        let narrow = project_triplet(t, 1..2).unwrap();
        assert_eq!(narrow.p.dim(), 1);
        assert_eq!(narrow.p.weights, t.p.weights);
        let via_full = project_triplet(&full, 1..2).unwrap();
        assert_eq!(via_full, narrow);
    }
}
