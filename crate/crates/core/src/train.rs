use std::ops::ControlFlow;

use serde::Serialize;

use crate::data::Label;
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, Metrics};
use crate::model::{Instance, Model, Prediction};
use crate::optim::{Adam, AdamConfig};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's update steps.
    pub train_loss: f64,
    /// Accuracy on the training set after the epoch, without dropout.
    pub train_acc: f64,
    pub dev_acc: Option<f64>,
    pub dev_macro_f1: Option<f64>,
}

impl EpochLog {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub logs: Vec<EpochLog>,
    pub stopped_early: bool,
}

pub fn predict_all(model: &Model, insts: &[Instance]) -> Result<Vec<Prediction>> {
    insts.iter().map(|i| model.predict(i)).collect()
}

pub fn evaluate(model: &Model, insts: &[Instance]) -> Result<Metrics> {
    let preds = predict_all(model, insts)?;
    let gold: Vec<Label> = insts.iter().map(|i| i.label).collect();
    let pred: Vec<Label> = preds.iter().map(|p| p.label).collect();
    compute_metrics(&gold, &pred)
}

fn add_into(acc: &mut [Tensor], grads: &[Tensor]) {
    for (a, g) in acc.iter_mut().zip(grads) {
        for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
            *x += y;
        }
    }
}

/// Trains in place with Adam. Examples are shuffled each epoch from
/// `config.seed`; gradients are summed over `batch_size` examples plus one
/// penalty term before each update. `on_epoch` sees every log line and may
/// stop training by returning `Break`.
pub fn train(
    model: &mut Model,
    train_set: &[Instance],
    dev_set: Option<&[Instance]>,
    mut on_epoch: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<TrainSummary> {
    if train_set.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let cfg = model.config.clone();
    let mut order_rng = Rng::new(cfg.seed);
    let mut dropout_rng = Rng::new(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &model.params.values(),
    );
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut logs = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        order_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (_, mut acc) = model.penalty_and_grads()?;
            for &i in batch {
                let (ce, grads, _) =
                    model.example_loss_and_grads(&train_set[i], Some(&mut dropout_rng))?;
                if !ce.is_finite() {
                    return Err(Error::NonFinite("training loss"));
                }
                loss_sum += ce;
                add_into(&mut acc, &grads);
            }
            adam.step(&mut model.params.values_mut(), &acc)?;
        }
        let dev = dev_set.map(|d| evaluate(model, d)).transpose()?;
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: evaluate(model, train_set)?.accuracy,
            dev_acc: dev.as_ref().map(|m| m.accuracy),
            dev_macro_f1: dev.as_ref().map(|m| m.macro_f1),
        };
        let flow = on_epoch(&log);
        let loss = log.train_loss;
        logs.push(log);
        if flow.is_break() {
            stopped_early = epoch < cfg.epochs;
            break;
        }
        if cfg.patience > 0 {
            if loss < best_loss {
                best_loss = loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    stopped_early = epoch < cfg.epochs;
                    break;
                }
            }
        }
    }
    Ok(TrainSummary {
        logs,
        stopped_early,
    })
}
