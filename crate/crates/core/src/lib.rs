//! Lane-keeping pipeline: a from-scratch steering CNN trained by behavioral
//! cloning, a 2D driving simulator, a zone-sensor avoidance state machine and
//! closed-loop autonomy evaluation.

pub mod avoidance;
pub mod dataset;
pub mod eval;
pub mod nn;
mod par;
pub mod sim;
pub mod tensor;

pub use tensor::{Scalar, Tensor};
