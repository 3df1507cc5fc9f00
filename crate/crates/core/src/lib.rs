//! Self-normalizing multivariate point process with learned delayed kernels.
//!
//! The intensity of type `k` is
//!
//! ```text
//! λ_k(t) = σ(α_k + Σ_{t_n < t} ψ(e_{k_n}, e_k) · φ(e_{k_n}, e_k, |t − t_n − d_{k_n,k}|))
//! ```
//!
//! with a signed interaction network ψ, a monotone non-negative bounded
//! decay network φ, learned delays `d` and a positive link `σ`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diffcore;
pub mod likelihood;
pub mod model;
pub mod predict;
pub mod rng;
pub mod simulate;
pub mod train;

pub use data::{mean_inter_event_time, DataError, Event, EventSequence, Manifest};
pub use diffcore::OptimizerConfig;
pub use likelihood::{Estimator, LossReport, NllConfig};
pub use model::{CheckpointMeta, IntensityModel, Link, ModelError, ModelSpec, ModelView, RecoveredParams, Snmpp};
pub use predict::{EvalReport, PredictConfig};
pub use simulate::{Generator, GroundTruthProcess, Homogeneous, SupplyChainConfig};
pub use train::{EpochRecord, LrSchedule, StopReason, TrainConfig, TrainOutcome};
