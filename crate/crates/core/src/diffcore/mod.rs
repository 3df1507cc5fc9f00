//! Numeric substrate: scalar reverse-mode differentiation, parameter
//! storage with positivity reparameterizations, AdamW and checkpoints.

pub mod adamw;
pub mod checkpoint;
pub mod params;
pub mod scalar;
pub mod tape;

pub use adamw::{adamw_step, OptimError, OptimizerConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError, CheckpointHeader};
pub use params::{Constraint, NamedSlice, ParamLayout, ParamStore};
pub use scalar::{elu_plus_one, gelu, sigmoid, softplus, softplus_inverse};
pub use tape::{Adjoints, NodeId, Op, Tape, TapeError};
