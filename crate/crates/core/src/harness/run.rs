//! File-backed runs: dataset resolution, fold splits and the train/eval
//! drivers used by the command line.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::data::{generate_dataset, load_dataset, plan_folds, preprocess, Dataset, PreparedSample};
use crate::error::{Error, Result};
use crate::numerics::Scalar;
use crate::objective::MetricsReport;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::train::{evaluate, train, TrainOutcome};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONFIG_FILE: &str = "config.txt";

/// Which part of the configured fold to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    All,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" | "val" => Ok(Split::Test),
            "all" => Ok(Split::All),
            _ => Err(Error::Config(format!("split must be train, test or all, got {s:?}"))),
        }
    }
}

/// Loads `cfg.dataset` if set, otherwise generates from `cfg.data`.
pub fn resolve_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let dataset = match &cfg.dataset {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Config(format!("dataset {} does not exist", path.display())));
            }
            load_dataset(path)?
        }
        None => generate_dataset(&cfg.data)?,
    };
    if dataset.spec.num_classes != cfg.model.num_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes, model has {}",
            dataset.spec.num_classes, cfg.model.num_classes
        )));
    }
    Ok(dataset)
}

/// Train/test sample indices of fold `fold` out of `folds`. A single fold
/// trains and tests on everything.
pub fn fold_split(dataset: &Dataset, folds: usize, fold: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if folds == 1 {
        let all: Vec<usize> = (0..dataset.samples.len()).collect();
        return Ok((all.clone(), all));
    }
    let mut plan = plan_folds(&dataset.subject_ids(), folds, seed)?;
    if fold >= plan.k() {
        return Err(Error::Config(format!("fold {fold} out of range for {folds} folds")));
    }
    let f = plan.folds.swap_remove(fold);
    Ok((f.train, f.test))
}

pub fn prepare<T: Scalar>(dataset: &Dataset, indices: &[usize], cfg: &RunConfig) -> Result<Vec<PreparedSample<T>>> {
    indices
        .iter()
        .map(|&i| preprocess(&dataset.samples[i], &cfg.model))
        .collect()
}

pub fn select(train: &[usize], test: &[usize], split: Split) -> Vec<usize> {
    match split {
        Split::Train => train.to_vec(),
        Split::Test => test.to_vec(),
        Split::All => {
            let mut all: Vec<usize> = train.iter().chain(test).copied().collect();
            all.sort_unstable();
            all.dedup();
            all
        }
    }
}

/// Trains on the configured fold, streaming JSON lines to `out` and to
/// `<out_dir>/metrics.jsonl`, and rewriting `<out_dir>/checkpoint.bin`
/// after every epoch.
pub fn run_train<T: Scalar>(cfg: &RunConfig, out: &mut dyn Write) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let dataset = resolve_dataset(cfg)?;
    let (train_idx, test_idx) = fold_split(&dataset, cfg.folds, cfg.fold, cfg.data.seed)?;
    let train_set = prepare::<T>(&dataset, &train_idx, cfg)?;
    let val_set = prepare::<T>(&dataset, &test_idx, cfg)?;

    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_path = dir.join(CONFIG_FILE);
    fs::write(&config_path, cfg.to_text()).map_err(|e| Error::io(&config_path, e))?;
    let metrics_path = dir.join(METRICS_FILE);
    let mut metrics = BufWriter::new(File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?);
    let ck_path = dir.join(CHECKPOINT_FILE);

    train(cfg, &train_set, &val_set, &mut |record, ck| {
        let line = serde_json::to_string(record)?;
        writeln!(metrics, "{line}").and_then(|_| metrics.flush()).map_err(|e| Error::io(&metrics_path, e))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))?;
        ck.save(&ck_path)
    })
}

/// Evaluates a checkpoint on a split of its own configured fold, or of an
/// explicitly given dataset directory.
pub fn run_eval<T: Scalar>(checkpoint: &Path, dataset: Option<PathBuf>, split: Split) -> Result<MetricsReport> {
    let ck = Checkpoint::<T>::load(checkpoint)?;
    let mut cfg = ck.config.clone();
    if dataset.is_some() {
        cfg.dataset = dataset;
    }
    let data = resolve_dataset(&cfg)?;
    let (train_idx, test_idx) = fold_split(&data, cfg.folds, cfg.fold, cfg.data.seed)?;
    let samples = prepare::<T>(&data, &select(&train_idx, &test_idx, split), &cfg)?;
    let (model, store) = ck.model()?;
    evaluate(&model, &store, &samples)
}
