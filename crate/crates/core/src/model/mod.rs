//! Assembly of encoder, decoders and task heads for each structure
//! strategy.

mod heads;
mod network;
mod shapes;
mod strategy;

pub use heads::TaskHead;
pub use network::{ForwardPass, Model, MultiTaskOutput, Prediction, TaskDecoder};
pub use shapes::{activation_shapes, count_parameters, describe, parameter_count, parameter_shapes, ShapeTrace};
pub use strategy::{StrategyKind, Task};

#[cfg(test)]
mod tests;
