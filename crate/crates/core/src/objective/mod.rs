//! Weighted multi-task loss, recall metrics and the optimizer.

mod adamw;
mod loss;
mod metrics;

pub use adamw::{AdamState, AdamW};
pub use loss::{multitask_loss, LossTerms, LossWeights, MultiTaskLabels};
pub use metrics::{compute_uar_war, confusion_matrix, MetricsReport};
