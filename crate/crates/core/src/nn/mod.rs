//! Minimal dense-tensor engine with reverse-mode automatic
//! differentiation, the layer catalog used by every network in the
//! crate, and an adaptive-moment optimizer.
//!
//! All production paths run in `f32` ([`Real`]); reductions that are
//! cheap relative to the surrounding compute (losses, norms, optimizer
//! arithmetic) accumulate in f64. The kernels are generic over
//! [`Scalar`] so the gradient-check suite can rerun them in `f64`.

pub mod kernels;
pub mod optim;
pub mod params;
pub mod stack;
pub mod tensor;

pub use optim::{clip_global_norm, linear_lr, optimizer_step, GRAD_CLIP_NORM};
pub use params::{Param, ParamGrads, ParameterSet};
pub use stack::{backward, build_stack, forward, infer, BuiltLayer, LayerSpec, LayerStack, Tape};
pub use tensor::{lit, Real, Scalar, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("layer {layer} ({kind}): {msg}")]
    ShapeMismatch { layer: String, kind: String, msg: String },
    #[error("tape for stack {stack} was already consumed")]
    TapeConsumed { stack: String },
    #[error("tape for stack {stack} is stale: parameters changed since the forward pass")]
    StaleTape { stack: String },
    #[error("non-finite gradient for parameter {name}")]
    NonFiniteGradient { name: String },
    #[error("missing parameter {name}")]
    MissingParam { name: String },
    #[error("{0}")]
    Invalid(String),
}
