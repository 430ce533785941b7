//! Mini-batch AdamW training and evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PreparedSample;
use crate::error::{Error, Result};
use crate::model::{Model, Task};
use crate::numerics::{Graph, ParamStore, Scalar, Tensor};
use crate::objective::{compute_uar_war, multitask_loss, MetricsReport};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;

/// One line of the metrics stream. Epoch 0 is the evaluation of the
/// initialization and carries no training statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: u64,
    /// Mean weighted loss over the epoch's training samples.
    pub train_loss: Option<f64>,
    /// Accuracy of the pre-update predictions made while training.
    pub train_accuracy: Option<f64>,
    /// `None` when the validation split is empty.
    pub val: Option<MetricsReport>,
}

pub struct TrainOutcome<T> {
    pub model: Model,
    pub checkpoint: Checkpoint<T>,
    pub history: Vec<EpochRecord>,
}

fn sq_err<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> f64 {
    let n = pred.len() as f64;
    pred.data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p.as_f64() - t.as_f64()).powi(2))
        .sum::<f64>()
        / n
}

/// Single forward pass per sample; parameters are read only.
///
/// Fails if the model has no expression head, since recall is undefined
/// without class predictions.
pub fn evaluate<T: Scalar>(model: &Model, store: &ParamStore<T>, samples: &[PreparedSample<T>]) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluate", "empty split"));
    }
    let mut pred = Vec::with_capacity(samples.len());
    let mut truth = Vec::with_capacity(samples.len());
    let (mut detect, mut landmark) = (Vec::new(), Vec::new());
    for s in samples {
        let out = model.predict(store, &s.video)?;
        let class = out
            .predicted_class()
            .ok_or_else(|| Error::invalid("evaluate", "model has no expression head"))?;
        pred.push(class);
        truth.push(s.labels.expression);
        if let Some(b) = &out.boxes {
            detect.push(sq_err(b, &s.labels.boxes));
        }
        if let Some(p) = &out.landmarks {
            landmark.push(sq_err(p, &s.labels.landmarks));
        }
    }
    let mut report = compute_uar_war(&pred, &truth, model.config.num_classes)?;
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    report.detect_mse = mean(&detect);
    report.landmark_mse = mean(&landmark);
    Ok(report)
}

fn validation<T: Scalar>(model: &Model, store: &ParamStore<T>, val: &[PreparedSample<T>]) -> Result<Option<MetricsReport>> {
    if val.is_empty() {
        Ok(None)
    } else {
        evaluate(model, store, val).map(Some)
    }
}

/// Trains from the initialization given by `cfg.model.seed`.
///
/// `on_epoch` sees every record together with the checkpoint reached at
/// that point; returning an error stops training. A non-finite loss aborts
/// before the offending update, leaving the last reported checkpoint as
/// the last good state.
pub fn train<T: Scalar>(
    cfg: &RunConfig,
    train_set: &[PreparedSample<T>],
    val_set: &[PreparedSample<T>],
    on_epoch: &mut dyn FnMut(&EpochRecord, &Checkpoint<T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() && cfg.train.epochs > 0 {
        return Err(Error::invalid("train", "empty training split"));
    }
    let (model, store) = Model::init::<T>(&cfg.model)?;
    let mut ck = Checkpoint::fresh(cfg.clone(), store);
    let optimizer = cfg.train.optimizer();
    let weights = cfg.train.loss;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.model.seed ^ 0x5EED_BA7C);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.train.epochs + 1);

    let initial = EpochRecord {
        epoch: 0,
        step: 0,
        train_loss: None,
        train_accuracy: None,
        val: validation(&model, &ck.params, val_set)?,
    };
    on_epoch(&initial, &ck)?;
    history.push(initial);

    for epoch in 1..=cfg.train.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.train.batch_size) {
            let mut grads = ck.params.zeros_like();
            for &i in batch {
                let sample = &train_set[i];
                let mut g = Graph::new();
                let pass = model.forward(&mut g, &ck.params, &sample.video)?;
                let terms = multitask_loss(&mut g, &pass.output, &sample.labels, &weights)?;
                let loss = g.value(terms.total).data()[0].as_f64();
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("training loss at epoch {epoch}, step {}", ck.step + 1),
                    });
                }
                loss_sum += loss;
                if let Some(e) = pass.output.expression {
                    correct += usize::from(g.value(e).argmax() == sample.labels.expression);
                }
                g.backward(terms.total)?;
                g.accumulate_param_grads(&mut grads)?;
            }
            let inv = T::cast_from(1.0 / batch.len() as f64);
            for t in &mut grads {
                t.data_mut().iter_mut().for_each(|v| *v = *v * inv);
            }
            optimizer.step(&mut ck.params, &grads, &mut ck.adam)?;
            ck.step += 1;
        }
        ck.epoch = epoch as u64;
        let n = train_set.len() as f64;
        let record = EpochRecord {
            epoch,
            step: ck.step,
            train_loss: Some(loss_sum / n),
            train_accuracy: model.heads.iter().any(|h| h.task == Task::Expression).then(|| correct as f64 / n),
            val: validation(&model, &ck.params, val_set)?,
        };
        on_epoch(&record, &ck)?;
        history.push(record);
    }
    Ok(TrainOutcome {
        model,
        checkpoint: ck,
        history,
    })
}
