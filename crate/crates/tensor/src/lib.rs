//! Minimal differentiable tensor core.
//!
//! Everything is a 4-D `N×C×H×W` array of `f64`. Forward computations are
//! recorded on a [`Tape`]; [`Tape::backward`] replays the tape in reverse to
//! produce gradients for every recorded value. Trainable state lives in a
//! [`ParamStore`] and is updated with [`adam_step`].

mod adam;
mod checkpoint;
mod error;
mod gradcheck;
pub mod ops;
mod params;
mod shape;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, grad_check_with, GradCheckConfig, GradCheckReport};
pub use ops::{Conv2dConfig, PoolConfig};
pub use params::{Param, ParamId, ParamKind, ParamStore};
pub use shape::Shape;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
