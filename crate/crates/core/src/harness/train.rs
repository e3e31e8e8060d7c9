//! Mini-batch training with early stopping on validation accuracy.

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, MetricsReport};
use crate::config::TrainConfig;
use crate::data::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::numcore::optim::OptimizerState;
use crate::numcore::rng::Rng;
use crate::pipeline::DccfModel;

const INIT_STREAM: u64 = 0x1417;
const SHUFFLE_STREAM: u64 = 0x5EF1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: DccfModel,
    pub optimizer: OptimizerState,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainOutcome {
    pub fn best_val_accuracy(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.history[e].val_accuracy)
    }
}

/// Initial parameters for `config`, seeded by `config.seed`.
pub fn init_model(config: &TrainConfig) -> Result<DccfModel> {
    DccfModel::new(config, &mut Rng::derive(config.seed, &[INIT_STREAM]))
}

pub fn check_dataset_dims(config: &TrainConfig, dataset: &Dataset) -> Result<()> {
    let h = &dataset.header;
    if (h.d_text, h.d_image, h.objects, h.polarity) != (config.d_text, config.d_image, config.objects, config.polarity)
    {
        return Err(Error::config(format!(
            "dataset dims (text {}, image {}, objects {}, polarity {}) differ from config ({}, {}, {}, {})",
            h.d_text, h.d_image, h.objects, h.polarity, config.d_text, config.d_image, config.objects, config.polarity
        )));
    }
    Ok(())
}

/// One optimizer step on the mean loss of `batch`; returns that mean loss.
pub fn train_step(model: &mut DccfModel, optimizer: &mut OptimizerState, batch: &[&Sample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for s in batch {
        total += model.accumulate_gradients(s, scale)?.total;
    }
    optimizer.step(model)?;
    Ok(total * scale)
}

pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    check_dataset_dims(config, dataset)?;
    let mut model = init_model(config)?;
    let mut optimizer = OptimizerState::new(&model, config.learning_rate)?;
    let mut history = Vec::new();
    if config.max_epochs == 0 {
        return Ok(TrainOutcome { model, optimizer, history, best_epoch: None });
    }

    let train_idx = dataset.indices(Split::Train);
    let val_idx = dataset.indices(Split::Val);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::data("training needs non-empty train and val splits"));
    }

    let mut best: Option<(usize, f64, DccfModel, OptimizerState)> = None;
    let mut since_best = 0;
    for epoch in 0..config.max_epochs {
        let mut order = train_idx.clone();
        Rng::derive(config.seed, &[SHUFFLE_STREAM, epoch as u64]).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &dataset.samples[i]).collect();
            let loss = train_step(&mut model, &mut optimizer, &batch).map_err(|e| match e {
                Error::Numerical(msg) => Error::numerical(format!("epoch {epoch}, batch {b}: {msg}")),
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::numerical(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            loss_sum += loss * chunk.len() as f64;
        }
        let val_accuracy = accuracy_on(&model, dataset, &val_idx)?;
        let improved = best.as_ref().is_none_or(|(_, acc, _, _)| val_accuracy > *acc);
        history.push(EpochRecord { epoch, train_loss: loss_sum / train_idx.len() as f64, val_accuracy, improved });
        if improved {
            best = Some((epoch, val_accuracy, model.clone(), optimizer.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
                break;
            }
        }
    }
    let (best_epoch, _, model, optimizer) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model, optimizer, history, best_epoch: Some(best_epoch) })
}

pub fn predict_scores(model: &DccfModel, dataset: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
    indices.iter().map(|&i| Ok(model.predict(&dataset.samples[i].raw)?.prob_fake)).collect()
}

fn accuracy_on(model: &DccfModel, dataset: &Dataset, indices: &[usize]) -> Result<f64> {
    Ok(evaluate_indices(model, dataset, indices)?.accuracy)
}

pub fn evaluate_indices(model: &DccfModel, dataset: &Dataset, indices: &[usize]) -> Result<MetricsReport> {
    if indices.is_empty() {
        return Err(Error::data("cannot evaluate an empty split"));
    }
    let scores = predict_scores(model, dataset, indices)?;
    let labels: Vec<_> = indices.iter().map(|&i| dataset.samples[i].label).collect();
    Ok(compute_metrics(&scores, &labels))
}

pub fn evaluate(model: &DccfModel, dataset: &Dataset, split: Split) -> Result<MetricsReport> {
    evaluate_indices(model, dataset, &dataset.indices(split))
}
