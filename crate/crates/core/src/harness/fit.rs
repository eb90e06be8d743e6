//! Mini-batch training loop with validation-based early stopping.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::ConfusionMatrix;
use super::split::holdout_split;
use crate::error::{Error, Result};
use crate::nn::{argmax, mean_cross_entropy, AdamConfig, AdamState, RecurrentModel};
use crate::rng::{derive_seed, substream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    /// Share of the training trials held out for early stopping; 0 trains
    /// for `max_epochs` and keeps the final parameters.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 32,
            max_epochs: 60,
            patience: 10,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and epoch count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!("validation fraction {} outside [0, 1)", self.val_fraction)));
        }
        Ok(())
    }
}

/// Model inputs: whole sequences, or body encodings for head-only training
/// (see [`RecurrentModel::encode`]).
#[derive(Debug, Clone, Copy)]
pub enum Inputs<'a> {
    Sequences(ArrayView3<'a, f32>),
    Encoded(ArrayView2<'a, f32>),
}

enum Batch {
    Sequences(Array3<f32>),
    Encoded(Array2<f32>),
}

impl Inputs<'_> {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Sequences(x) => x.len_of(Axis(0)),
            Inputs::Encoded(z) => z.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn gather(&self, idx: &[usize]) -> Batch {
        match self {
            Inputs::Sequences(x) => Batch::Sequences(x.select(Axis(0), idx)),
            Inputs::Encoded(z) => Batch::Encoded(z.select(Axis(0), idx)),
        }
    }
}

pub fn predict(model: &RecurrentModel<f32>, inputs: Inputs<'_>) -> Result<Vec<usize>> {
    match inputs {
        Inputs::Sequences(x) => model.predict(x),
        Inputs::Encoded(z) => model.predict_head(z),
    }
}

pub fn evaluate(model: &RecurrentModel<f32>, inputs: Inputs<'_>, labels: &[usize]) -> Result<ConfusionMatrix> {
    ConfusionMatrix::from_predictions(model.n_classes(), labels, &predict(model, inputs)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub epochs_run: usize,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub history: Vec<EpochRecord>,
}

/// Trains `model` in place. `tag` distinguishes the shuffle and dropout
/// substreams of independent runs sharing `cfg.seed`.
pub fn fit(
    model: &mut RecurrentModel<f32>,
    inputs: Inputs<'_>,
    labels: &[usize],
    cfg: &TrainConfig,
    tag: &[u64],
) -> Result<FitOutcome> {
    cfg.validate()?;
    if inputs.len() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!("{} samples for {} labels", inputs.len(), labels.len())));
    }
    let (train_idx, val_idx) = if cfg.val_fraction > 0.0 {
        match holdout_split(labels, cfg.val_fraction, derive_seed(cfg.seed, "validation", tag)) {
            Ok(split) => split,
            Err(_) => ((0..labels.len()).collect(), Vec::new()),
        }
    } else {
        ((0..labels.len()).collect(), Vec::new())
    };
    let val = (!val_idx.is_empty()).then(|| {
        let y: Vec<usize> = val_idx.iter().map(|&i| labels[i]).collect();
        (inputs.gather(&val_idx), y)
    });

    let mut adam = AdamState::new(cfg.adam);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, RecurrentModel<f32>)> = None;
    let mut since_best = 0;
    let mut order = train_idx.clone();
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let mut stream_idx = tag.to_vec();
        stream_idx.push(epoch as u64);
        order.shuffle(&mut substream(cfg.seed, "shuffle", &stream_idx));
        let mut dropout_rng = substream(cfg.seed, "dropout", &stream_idx);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let grads = match inputs.gather(chunk) {
                Batch::Sequences(x) => model.loss_and_gradients(x.view(), &y, Some(&mut dropout_rng))?,
                Batch::Encoded(z) => model.loss_and_gradients_head(z.view(), &y, Some(&mut dropout_rng))?,
            };
            if !grads.loss.is_finite() || grads.entries.iter().any(|e| e.values.iter().any(|v| !v.is_finite())) {
                return Err(Error::NumericFailure(format!("non-finite loss or gradient in epoch {epoch}")));
            }
            loss_sum += grads.loss * chunk.len() as f64;
            adam.step(model, &grads)?;
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_metrics = match &val {
            Some((batch, y)) => {
                let probs = match batch {
                    Batch::Sequences(x) => model.predict_proba(x.view())?,
                    Batch::Encoded(z) => model.predict_proba_head(z.view())?,
                };
                let loss = mean_cross_entropy(probs.view(), y)?;
                let hits = probs
                    .rows()
                    .into_iter()
                    .zip(y)
                    .filter(|(row, &label)| argmax(row.iter().copied()) == label)
                    .count();
                Some((loss, hits as f64 / y.len() as f64))
            }
            None => None,
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: val_metrics.map(|m| m.0),
            val_accuracy: val_metrics.map(|m| m.1),
        });
        if let Some((loss, _)) = val_metrics {
            if !loss.is_finite() {
                return Err(Error::NumericFailure(format!("non-finite validation loss in epoch {epoch}")));
            }
            if best.as_ref().is_none_or(|(b, _, _)| loss < *b) {
                best = Some((loss, epoch, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    let epochs_run = history.len();
    let best_epoch = match best {
        Some((_, epoch, params)) => {
            *model = params;
            epoch
        }
        None => epochs_run,
    };
    Ok(FitOutcome { epochs_run, best_epoch, stopped_early, history })
}

/// Copies the selected trials of a feature tensor into model precision.
pub fn gather_f32(data: &ndarray::Array3<f64>, idx: &[usize]) -> Array3<f32> {
    let (_, t, f) = data.dim();
    let mut out = Array3::zeros((idx.len(), t, f));
    for (k, &i) in idx.iter().enumerate() {
        out.index_axis_mut(Axis(0), k)
            .zip_mut_with(&data.index_axis(Axis(0), i), |o, &v| *o = v as f32);
    }
    out
}
