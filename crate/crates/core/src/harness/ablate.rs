//! Strategy × fold sweeps summarized as a strategy comparison table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::StrategyKind;
use crate::numerics::Scalar;

use super::config::RunConfig;
use super::run::{fold_split, prepare};
use super::train::{evaluate, train};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub strategy: String,
    pub fold: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub uar: f64,
    pub war: f64,
    pub detect_mse: Option<f64>,
    pub landmark_mse: Option<f64>,
    pub final_train_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub strategy: String,
    pub sharing: String,
    pub decoder: String,
    /// Means over folds, in `[0, 1]`.
    pub uar: f64,
    pub war: f64,
    pub folds: Vec<FoldResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub k_folds: usize,
    /// How per-sample losses combine within a batch.
    pub loss_reduction: String,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, strategy: StrategyKind) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.strategy == strategy.name())
    }

    /// Best multi-task WAR minus single-task WAR, when both are present.
    pub fn mtl_margin(&self) -> Option<f64> {
        let stl = self.row(StrategyKind::Stl)?.war;
        self.rows
            .iter()
            .filter(|r| r.strategy != StrategyKind::Stl.name())
            .map(|r| r.war)
            .max_by(f64::total_cmp)
            .map(|best| best - stl)
    }

    /// Markdown table with percentages.
    pub fn table(&self) -> String {
        let mut s = String::from("| Strategy | Sharing | Decoder | UAR (%) | WAR (%) |\n|---|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.2} | {:.2} |",
                r.strategy,
                r.sharing,
                r.decoder,
                100.0 * r.uar,
                100.0 * r.war
            );
        }
        s
    }
}

/// Trains and evaluates every strategy on every fold of `dataset`.
/// `progress` receives each fold result as it completes.
pub fn ablate<T: Scalar>(
    base: &RunConfig,
    dataset: &Dataset,
    strategies: &[StrategyKind],
    progress: &mut dyn FnMut(&FoldResult),
) -> Result<AblationReport> {
    if strategies.is_empty() {
        return Err(Error::Config("ablation needs at least one strategy".into()));
    }
    let k = base.folds;
    let mut splits = Vec::with_capacity(k);
    for fold in 0..k {
        let (train_idx, test_idx) = fold_split(dataset, k, fold, base.data.seed)?;
        splits.push((prepare::<T>(dataset, &train_idx, base)?, prepare::<T>(dataset, &test_idx, base)?));
    }

    let mut rows = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let mut cfg = base.clone();
        cfg.model.strategy = strategy;
        let mut folds = Vec::with_capacity(k);
        for (fold, (train_set, test_set)) in splits.iter().enumerate() {
            cfg.fold = fold;
            let outcome = train(&cfg, train_set, &[], &mut |_, _| Ok(()))?;
            let report = evaluate(&outcome.model, &outcome.checkpoint.params, test_set)?;
            let result = FoldResult {
                strategy: strategy.name().to_string(),
                fold,
                train_samples: train_set.len(),
                test_samples: test_set.len(),
                uar: report.uar,
                war: report.war,
                detect_mse: report.detect_mse,
                landmark_mse: report.landmark_mse,
                final_train_loss: outcome.history.last().and_then(|r| r.train_loss),
            };
            progress(&result);
            folds.push(result);
        }
        let mean = |f: fn(&FoldResult) -> f64| folds.iter().map(f).sum::<f64>() / folds.len() as f64;
        let (sharing, decoder) = strategy.table_labels();
        rows.push(AblationRow {
            strategy: strategy.name().to_string(),
            sharing: sharing.to_string(),
            decoder: decoder.to_string(),
            uar: mean(|r| r.uar),
            war: mean(|r| r.war),
            folds,
        });
    }
    Ok(AblationReport {
        k_folds: k,
        loss_reduction: "batch_mean".into(),
        rows,
    })
}
