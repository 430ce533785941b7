//! Dense tensors, a differentiation tape and gradient checking.

pub mod codec;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{grad_check, grad_check_store, GradCheckReport, FD_STEP};
pub use graph::{BackwardFault, Graph, Var, LAYER_NORM_EPS};
pub use params::{
    trunc_normal, Init, Initializer, Param, ParamAlloc, ParamId, ParamStore, ShapeRecorder,
};
pub use tensor::{Scalar, Tensor};
