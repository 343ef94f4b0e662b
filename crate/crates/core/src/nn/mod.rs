//! A small dense-network stack with hand-written reverse-mode gradients.
//!
//! Tensors are `(batch, features)` matrices. Networks are generic over the
//! scalar type: training runs in `f32`, gradient checks in `f64`.

mod adam;
mod gradcheck;
mod layers;
mod loss;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use layers::{
    Activation, Backward, BatchNorm, Dense, DenseNet, ForwardPass, Layer, LayerKind, Mode,
    ParamGrads,
};
pub use loss::{loss, LossKind};

pub trait Scalar:
    Float
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self;
}

impl Scalar for f32 {
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
}

