//! Synthetic multi-task video data, preprocessing and fold planning.

mod folds;
mod preprocess;
mod store;
mod synth;

pub use folds::{plan_folds, Fold, FoldPlan};
pub use preprocess::{preprocess, resize_bilinear, temporal_indices, PreparedSample};
pub use store::{load_dataset, save_dataset, MANIFEST};
pub use synth::{generate_dataset, Dataset, DatasetSpec, SyntheticSample, LANDMARK_ANCHORS};
