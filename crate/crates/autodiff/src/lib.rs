//! Dense `f64` tensors, a recording tape with reverse-mode gradients, the
//! layer ops needed by small convolutional networks, Adam, finite-difference
//! gradient checking and a checkpoint format for named parameter sets.
//!
//! Image tensors use NHWC layout; convolution kernels are `3×3×C×K`.

pub mod adam;
pub mod checkpoint;
mod conv;
mod error;
mod gemm;
pub mod gradcheck;
mod linear;
mod loss;
mod norm;
mod ops;
pub mod params;
mod pool;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig, AdamState};
pub use error::{Error, Result};
pub use gradcheck::{gradcheck, GradCheckOptions, GradCheckReport};
pub use loss::PROB_FLOOR;
pub use norm::{BatchStats, BN_EPS};
pub use params::{Param, ParamId, ParamKind, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
