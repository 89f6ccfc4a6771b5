use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{ClassifierModel, EncodedDoc};
use super::loss::{class_weights, label_counts, weighted_ce_logit_grad, weighted_ce_loss};
use super::LabeledExample;
use crate::error::{Error, Result};
use crate::metrics::macro_metrics;
use crate::nn::{zero_grad, Adam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation macro-F1 improvement before stopping.
    pub patience: usize,
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 100,
            patience: 20,
            shuffle: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidConfig(
                "batch_size, max_epochs and patience must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Example-weighted mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub valid_f1: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_valid_f1: f64,
    pub class_weights: Vec<f64>,
}

/// Work interleaved with classification batches (the multitask trainer
/// slots its alignment batches in here).
pub(crate) trait Interleave {
    fn start_epoch(&mut self, _epoch: usize) -> Result<()> {
        Ok(())
    }
    /// Runs after classification batch `batch` of the epoch.
    fn after_batch(&mut self, _model: &mut ClassifierModel, _batch: usize) -> Result<()> {
        Ok(())
    }
    /// Runs once all `batches` classification batches of the epoch are done.
    fn finish_epoch(&mut self, _model: &mut ClassifierModel, _batches: usize) -> Result<()> {
        Ok(())
    }
}

impl Interleave for () {}

/// One optimiser update on a classification batch; returns the summed
/// weighted loss of the batch.
fn classification_step(
    model: &mut ClassifierModel,
    opt: &mut Adam,
    batch: &[&EncodedDoc],
    weights: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let labels: Vec<usize> = batch.iter().map(|d| d.label).collect();
    let pass = model.forward(batch, Some(rng))?;
    let loss = weighted_ce_loss(pass.probs.view(), &labels, weights)?;
    if !loss.sum.is_finite() {
        return Err(Error::Divergence {
            stage: "classification".into(),
            detail: format!("non-finite batch loss {}", loss.sum),
        });
    }
    let d_logits = weighted_ce_logit_grad(pass.probs.view(), &labels, weights);
    zero_grad(model);
    model.backward(batch, &pass, d_logits.view());
    opt.step(model);
    Ok(loss.sum)
}

pub fn evaluate_f1(model: &ClassifierModel, docs: &[EncodedDoc]) -> Result<f64> {
    let preds = model.predict(docs)?;
    let truths: Vec<usize> = docs.iter().map(|d| d.label).collect();
    Ok(macro_metrics(&truths, &preds, model.classes).f1)
}

/// Mini-batch Adam with class-weighted cross-entropy and early stopping on
/// validation macro-F1. Returns the best-validation parameters.
pub fn train_classifier(
    model: ClassifierModel,
    train: &[LabeledExample],
    valid: &[LabeledExample],
    config: &TrainConfig,
) -> Result<(ClassifierModel, TrainHistory)> {
    let train_docs = model.encode_examples(train)?;
    let valid_docs = model.encode_examples(valid)?;
    train_loop(model, &train_docs, &valid_docs, config, &mut ())
}

pub(crate) fn train_loop(
    mut model: ClassifierModel,
    train_docs: &[EncodedDoc],
    valid_docs: &[EncodedDoc],
    config: &TrainConfig,
    extra: &mut dyn Interleave,
) -> Result<(ClassifierModel, TrainHistory)> {
    config.validate()?;
    if train_docs.is_empty() {
        return Err(Error::Precondition("empty training set".into()));
    }
    if valid_docs.is_empty() {
        return Err(Error::Precondition("empty validation set".into()));
    }
    let labels: Vec<usize> = train_docs.iter().map(|d| d.label).collect();
    let weights = class_weights(&label_counts(&labels, model.classes));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Adam::new(model.config.learning_rate);
    let mut order: Vec<usize> = (0..train_docs.len()).collect();

    let mut history = TrainHistory {
        epoch_losses: Vec::new(),
        valid_f1: Vec::new(),
        best_epoch: 0,
        best_valid_f1: f64::NEG_INFINITY,
        class_weights: weights.clone(),
    };
    let mut best = model.clone();
    for epoch in 1..=config.max_epochs {
        extra.start_epoch(epoch)?;
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&EncodedDoc> = chunk.iter().map(|&i| &train_docs[i]).collect();
            total += classification_step(&mut model, &mut opt, &batch, &weights, &mut rng)?;
            extra.after_batch(&mut model, b)?;
            batches += 1;
        }
        extra.finish_epoch(&mut model, batches)?;
        let f1 = evaluate_f1(&model, valid_docs)?;
        history.epoch_losses.push(total / train_docs.len() as f64);
        history.valid_f1.push(f1);
        log::debug!("epoch {epoch}: loss {:.6}, valid macro-F1 {f1:.4}", total / train_docs.len() as f64);
        if f1 > history.best_valid_f1 {
            history.best_valid_f1 = f1;
            history.best_epoch = epoch;
            best = model.clone();
        } else if epoch - history.best_epoch >= config.patience {
            break;
        }
    }
    Ok((best, history))
}
