//! Small neural substrate: MLPs, a squashed Gaussian policy head,
//! tape-based reverse-mode gradients, Adam and Polyak averaging.

mod adam;
mod checkpoint;
mod mlp;
mod policy;
pub mod tape;

use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, NamedTensor};
pub use mlp::{polyak_update, Bound, Mlp, Module, Param};
pub use policy::{
    standard_normal, tanh_correction, PolicyVars, SquashedGaussianPolicy, LOG_STD_MAX,
    LOG_STD_MIN,
};
pub use tape::{Gradients, Tape, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("non-finite values in {name}")]
    NonFinite { name: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
