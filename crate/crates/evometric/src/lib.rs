//! Online metric learning for data streams whose feature space evolves:
//! features vanish and new ones appear while the class structure persists.
//!
//! The model is a low-rank Mahalanobis metric trained with a triplet loss
//! whose distances are smoothed Wasserstein costs between per-class
//! signatures (weighted point sets), so each comparison uses a distribution
//! of samples rather than a single point. Training runs in two phases
//! around each feature change:
//!
//! * the **transforming stage** ([`run_tstage`]) learns paired metrics over
//!   the full and survived feature views before the change, forcing the
//!   survived features to carry the vanishing features' discriminative
//!   structure;
//! * the **inheriting stage** ([`run_istage`]) stacks the survived features
//!   through the learned metric next to the newly augmented features and
//!   learns one metric over the stacked space.
//!
//! [`run_one_shot`] wires both phases into the single-evolution pipeline,
//! and [`run_multi_shot`] chains them across repeated evolutions.
//! Classification is nearest-neighbor in the final learned space
//! ([`knn_predict`]).
//!
//! # Example
//!
//! ```
//! use evometric::{
//!     make_synthetic_stream, run_one_shot, EvalConfig, Hyperparams, TripletConfig,
//! };
//!
//! let stream = make_synthetic_stream(2, (3, 5, 2), 8.0, 4, 24, 7)?;
//! let hp = Hyperparams { rank_k: 4, inner_iters: 10, ..Default::default() };
//! let report = run_one_shot(&stream, &hp, &TripletConfig::default(), &EvalConfig::default())?;
//! assert!(report.accuracy_mean > 0.9);
//! # Ok::<(), evometric::Error>(())
//! ```
//!
//! The `examples/` directory walks each capability in isolation: transport
//! plans, closed-form metric updates, triplet sampling, the two training
//! stages, the end-to-end pipelines, ablations, and file ingestion.

pub mod data;
pub mod driver;
pub mod error;
pub mod eval;
pub mod istage;
pub mod metric;
pub mod transport;
pub mod triplet;
pub mod tstage;

pub use data::{
    build_stream_from_dataset, dataset_presets, make_multi_shot_stream, make_synthetic_stream,
    parse_delimited, parse_delimited_path, parse_sparse_text, parse_sparse_text_path,
    remap_labels, split_features, synthetic_stream_from_spec, write_delimited, write_sparse_text,
    DatasetSpec, FeatureLayout, StreamBatch, SyntheticSpec,
};
pub use driver::{
    multi_shot_variant, one_shot_variant, run_multi_shot, run_one_shot, EvolutionSchedule,
    TaskKind,
};
pub use error::{Error, Result};
pub use eval::{
    accuracy, aggregate_runs, knn_predict, run_variant, EvalConfig, Report, Timings, VariantKind,
};
pub use istage::{
    istage_objective, istage_update, istage_update_many, run_istage, run_istage_with,
    solve_istage_plans, stack_batch, stack_features, IStagePlans, IStageState, StackedBatch,
};
pub use metric::{
    hinge_triplet, inv_sqrt_gram, pa_mahalanobis_update, trace_norm, Hyperparams, MetricState,
    DEFAULT_RIDGE_EPS,
};
pub use transport::{
    cross_ground_cost, ground_cost, marginal_residual, sinkhorn, CostMatrix, Signature,
    SinkhornConfig, TransportPlan,
};
pub use triplet::{build_triplets, build_triplets_from, project_triplet, SignatureTriplet, TripletConfig};
pub use tstage::{
    run_tstage, run_tstage_with, solve_term_plans, tstage_objective, update_l_all,
    update_l_all_many, update_l_surv, update_l_surv_many, Regularizer, StageOptions, TermPlans,
    TStageState, TripletPair,
};
