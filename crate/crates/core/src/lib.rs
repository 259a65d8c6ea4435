//! Value-based selection of synthetic camera poses for pose-regression
//! data augmentation.
//!
//! The pipeline has four stages:
//!
//! 1. [`candidate_gen`] perturbs every training pose into a candidate pool.
//! 2. [`scoring`] rates each candidate by localization difficulty, coverage
//!    novelty and rendering observability, fuses the three into one value and
//!    ranks the pool.
//! 3. [`render_bridge`] supplies the view triplets that observability needs,
//!    either from the built-in toy renderer or from externally rendered images.
//! 4. [`proxy_eval`] measures, with a nearest-neighbour retrieval regressor,
//!    whether the selected views improve localization of held-out queries.
//!
//! [`pipeline`] wires the stages together behind the `poseselect` CLI.

pub mod candidate_gen;
pub mod error;
pub mod formats;
pub mod image_metrics;
pub mod pipeline;
pub mod pose_math;
pub mod proxy_eval;
pub mod render_bridge;
pub mod scoring;

pub use candidate_gen::{generate_pool, CandidatePose, PerturbConfig};
pub use error::{Error, Result};
pub use image_metrics::ObservabilityConfig;
pub use pose_math::{
    compute_stats, hybrid_distance, rotation_distance, DatasetStats, HybridMetric, MetricConfig,
    Pose,
};
pub use proxy_eval::{Descriptor, EvalReport};
pub use render_bridge::{ImageBuffer, ToyScene, ViewSource, ViewTriplet};
pub use scoring::{ScoringConfig, SelectionManifest, TrainError, ValueScore};
