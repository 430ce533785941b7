use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluation summary. Serialized as one JSON object per evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean recall over classes with non-zero support.
    pub uar: f64,
    /// Overall accuracy.
    pub war: f64,
    /// `None` for classes absent from the evaluated split.
    pub per_class_recall: Vec<Option<f64>>,
    pub support: Vec<usize>,
    pub detect_mse: Option<f64>,
    pub landmark_mse: Option<f64>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
}

pub fn confusion_matrix(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::invalid(
            "confusion_matrix",
            format!("need equal-length non-empty lists, got {} and {}", pred.len(), truth.len()),
        ));
    }
    let mut m = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::invalid(
                "confusion_matrix",
                format!("class id {} out of range for {num_classes} classes", p.max(t)),
            ));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

pub fn compute_uar_war(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<MetricsReport> {
    let confusion = confusion_matrix(pred, truth, num_classes)?;
    let support: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
    let per_class_recall: Vec<Option<f64>> = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| (support[c] > 0).then(|| row[c] as f64 / support[c] as f64))
        .collect();
    let present: Vec<f64> = per_class_recall.iter().flatten().copied().collect();
    let uar = present.iter().sum::<f64>() / present.len() as f64;
    let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
    let war = correct as f64 / pred.len() as f64;
    Ok(MetricsReport {
        uar,
        war,
        per_class_recall,
        support,
        detect_mse: None,
        landmark_mse: None,
        confusion,
    })
}
