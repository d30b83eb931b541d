//! A small reverse-mode differentiable tensor engine with exactly the
//! operators the road network needs.
//!
//! Everything is generic over [`Scalar`] so the same graph can be run in
//! `f32` for training and in `f64` for finite-difference gradient checks.

mod adam;
mod checkpoint;
mod conv;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

use std::fmt::Debug;

use ndarray::LinalgScalar;
use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use conv::ConvSpec;
pub use params::ParamStore;
pub use tape::{ClassTargets, DropoutKey, Gradients, PoolIndices, Tape, UnknownPolicy, Var, PROB_FLOOR};
pub use tensor::Tensor;

pub trait Scalar: Float + FromPrimitive + LinalgScalar + Default + Debug + Send + Sync + 'static {
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite float conversion")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("float to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{0}")]
    Contract(String),
    #[error("graph already differentiated; record a new forward pass")]
    AlreadyBackpropagated,
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> NnError {
    NnError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}
