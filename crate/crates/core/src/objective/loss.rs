use crate::error::{Error, Result};
use crate::model::MultiTaskOutput;
use crate::numerics::{Graph, Scalar, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub detect: f64,
    pub landmark: f64,
    pub expression: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            detect: 0.5,
            landmark: 0.5,
            expression: 1.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("w_detect", self.detect),
            ("w_landmark", self.landmark),
            ("w_expr", self.expression),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {w}")));
            }
        }
        Ok(())
    }
}

/// Per-sample supervision in model coordinates.
#[derive(Clone, Debug)]
pub struct MultiTaskLabels<T> {
    /// `[T, 4]` normalized `(x, y, w, h)`.
    pub boxes: Tensor<T>,
    /// `[T, 10]` normalized landmark coordinates.
    pub landmarks: Tensor<T>,
    pub expression: usize,
}

/// Graph handles of the weighted total and each unweighted term present.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub detect: Option<Var>,
    pub landmark: Option<Var>,
    pub expression: Option<Var>,
}

/// `w_d·MSE(B) + w_l·MSE(P) + w_e·CE(E)` over whichever outputs the model
/// produced.
pub fn multitask_loss<T: Scalar>(
    g: &mut Graph<T>,
    pred: &MultiTaskOutput,
    labels: &MultiTaskLabels<T>,
    weights: &LossWeights,
) -> Result<LossTerms> {
    let detect = pred.boxes.map(|b| g.mse(b, &labels.boxes)).transpose()?;
    let landmark = pred.landmarks.map(|p| g.mse(p, &labels.landmarks)).transpose()?;
    let expression = match pred.expression {
        Some(e) => {
            let classes = g.shape(e).iter().product::<usize>();
            if labels.expression >= classes {
                return Err(Error::invalid(
                    "multitask_loss",
                    format!("expression label {} out of range for {classes} classes", labels.expression),
                ));
            }
            Some(g.sparse_cross_entropy(e, labels.expression)?)
        }
        None => None,
    };

    let mut total: Option<Var> = None;
    for (term, w) in [
        (detect, weights.detect),
        (landmark, weights.landmark),
        (expression, weights.expression),
    ] {
        if let Some(t) = term {
            let weighted = g.scale(t, T::cast_from(w));
            total = Some(match total {
                Some(acc) => g.add(acc, weighted)?,
                None => weighted,
            });
        }
    }
    let total = total.ok_or_else(|| Error::invalid("multitask_loss", "model produced no outputs"))?;
    Ok(LossTerms {
        total,
        detect,
        landmark,
        expression,
    })
}
