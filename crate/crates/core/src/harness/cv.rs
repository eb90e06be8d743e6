//! Cross-validation and hold-out experiments on one subject's features.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{evaluate, fit, gather_f32, FitOutcome, Inputs, TrainConfig};
use super::metrics::ConfusionMatrix;
use super::split::{holdout_split, stratified_kfold};
use super::stats::{mean, stdev};
use crate::error::{Error, Result};
use crate::features::FeatureTensor;
use crate::nn::{build_model, LayerSpec, RecurrentModel};
use crate::rng::{derive_seed, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub fit: FitOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub k: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub stdev_accuracy: f64,
    pub pooled_confusion: ConfusionMatrix,
    pub folds: Vec<FoldResult>,
}

fn check_specs(features: &FeatureTensor, specs: &[LayerSpec]) -> Result<()> {
    let first = specs.first().ok_or_else(|| Error::Config("empty model spec".into()))?;
    let last = specs.last().expect("non-empty");
    if first.input_size != features.n_features() || last.output_size != features.n_classes() {
        return Err(Error::Shape(format!(
            "model maps {} features to {} classes, data has {} features and {} classes",
            first.input_size,
            last.output_size,
            features.n_features(),
            features.n_classes()
        )));
    }
    Ok(())
}

/// Trains a fresh model on `train` and evaluates it on `test`.
pub fn train_and_test(
    features: &FeatureTensor,
    specs: &[LayerSpec],
    cfg: &TrainConfig,
    train: &[usize],
    test: &[usize],
    model_seed: u64,
    tag: &[u64],
) -> Result<(RecurrentModel<f32>, FitOutcome, ConfusionMatrix)> {
    check_specs(features, specs)?;
    let mut model = build_model::<f32>(specs, model_seed)?;
    let labels = features.labels();
    let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let outcome = {
        let x = gather_f32(features.data(), train);
        fit(&mut model, Inputs::Sequences(x.view()), &y_train, cfg, tag)?
    };
    let x_test = gather_f32(features.data(), test);
    let confusion = evaluate(&model, Inputs::Sequences(x_test.view()), &y_test)?;
    Ok((model, outcome, confusion))
}

/// Stratified k-fold cross-validation: each fold trains a fresh model on
/// the other folds and tests on itself.
pub fn run_cv(features: &FeatureTensor, specs: &[LayerSpec], cfg: &TrainConfig, k: usize, seed: u64) -> Result<CvResult> {
    let plan = stratified_kfold(features.labels(), k, seed)?;
    let folds: Vec<FoldResult> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train = plan.train_indices(f);
            let test = plan.test_indices(f);
            let fold_cfg = TrainConfig { seed, ..*cfg };
            let (_, fit, confusion) = train_and_test(
                features,
                specs,
                &fold_cfg,
                &train,
                &test,
                derive_seed(seed, "init", &[f as u64]),
                &[f as u64],
            )?;
            Ok(FoldResult {
                fold: f,
                n_train: train.len(),
                n_test: test.len(),
                accuracy: confusion.accuracy(),
                confusion,
                fit,
            })
        })
        .collect::<Result<_>>()?;
    let fold_accuracies: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let mut pooled = ConfusionMatrix::new(features.n_classes());
    for f in &folds {
        pooled.add(&f.confusion)?;
    }
    Ok(CvResult {
        k,
        mean_accuracy: mean(&fold_accuracies),
        stdev_accuracy: stdev(&fold_accuracies),
        fold_accuracies,
        pooled_confusion: pooled,
        folds,
    })
}

/// Accuracy of always predicting the most frequent class.
pub fn chance_level(labels: &[usize]) -> f64 {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts.into_iter().max().unwrap_or(0) as f64 / labels.len().max(1) as f64
}

/// Cross-validation on randomly permuted labels, as a baseline for what the
/// model reaches without any label information.
pub fn permutation_cv(features: &FeatureTensor, specs: &[LayerSpec], cfg: &TrainConfig, k: usize, seed: u64) -> Result<CvResult> {
    let mut labels = features.labels().to_vec();
    labels.shuffle(&mut substream(seed, "permutation", &[]));
    let permuted = FeatureTensor::new(
        features.data().clone(),
        labels,
        features.condition(),
        features.class_names().to_vec(),
    )?;
    run_cv(&permuted, specs, cfg, k, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutResult {
    pub test_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub fit: FitOutcome,
}

/// Stratified train/test split, training on the larger side.
pub fn run_holdout(
    features: &FeatureTensor,
    specs: &[LayerSpec],
    cfg: &TrainConfig,
    test_fraction: f64,
    seed: u64,
) -> Result<(RecurrentModel<f32>, HoldoutResult)> {
    let (train, test) = holdout_split(features.labels(), test_fraction, seed)?;
    let cfg = TrainConfig { seed, ..*cfg };
    let (model, fit, confusion) = train_and_test(features, specs, &cfg, &train, &test, derive_seed(seed, "init", &[u64::MAX]), &[u64::MAX])?;
    Ok((
        model,
        HoldoutResult {
            test_fraction,
            n_train: train.len(),
            n_test: test.len(),
            accuracy: confusion.accuracy(),
            confusion,
            fit,
        },
    ))
}
