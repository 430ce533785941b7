//! Run configuration, training, checkpoints, evaluation, ablations and
//! gradient-check reports.

mod ablate;
mod checkpoint;
mod config;
mod gradcheck;
mod run;
mod train;

pub use ablate::{ablate, AblationReport, AblationRow, FoldResult};
pub use checkpoint::{peek_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{parse_pairs, Precision, RunConfig, TrainSettings, KEYS};
pub use gradcheck::{run_gradcheck, ComponentCheck, GRADCHECK_TOLERANCE};
pub use run::{fold_split, prepare, resolve_dataset, run_eval, run_train, select, Split, CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE};
pub use train::{evaluate, train, EpochRecord, TrainOutcome};

#[cfg(test)]
mod tests;
