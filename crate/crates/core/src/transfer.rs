//! Overt-to-covert transfer: freeze the recurrent body of a model trained on
//! overt speech and fine-tune its dense head on covert-speech budgets.

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTensor;
use crate::harness::{
    class_members, correct_family, evaluate, fit, gather_f32, holdout_split, mean, paired_t_test,
    proportional_allocation, run_holdout, stdev, train_and_test, ConfusionMatrix, FitOutcome, HoldoutResult, Inputs,
    TTestRecord, TrainConfig,
};
use crate::nn::{build_model, Layer, LayerSpec, RecurrentModel};
use crate::rng::{derive_seed, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferPlan {
    /// Fine-tuning budgets as fractions of all covert trials.
    pub budgets: Vec<f64>,
    pub test_fraction: f64,
    /// Seed of the held-out covert test split, shared by every run.
    pub split_seed: u64,
    pub reinit_head: bool,
    pub seeds: Vec<u64>,
    pub finetune: TrainConfig,
    /// Training settings for the from-scratch covert baselines; `None`
    /// skips them.
    pub scratch: Option<TrainConfig>,
}

impl Default for TransferPlan {
    fn default() -> Self {
        Self {
            budgets: vec![0.15, 0.20, 0.25, 0.30],
            test_fraction: 0.2,
            split_seed: 0,
            reinit_head: false,
            seeds: (0..5).collect(),
            finetune: TrainConfig { max_epochs: 40, ..TrainConfig::default() },
            scratch: Some(TrainConfig::default()),
        }
    }
}

impl TransferPlan {
    pub fn validate(&self) -> Result<()> {
        if self.budgets.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("transfer plan needs at least one budget and one seed".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test fraction {} outside (0, 1)", self.test_fraction)));
        }
        for (i, &b) in self.budgets.iter().enumerate() {
            if !(b > 0.0) || b + self.test_fraction > 1.0 + 1e-12 {
                return Err(Error::Config(format!(
                    "budget {b} must be positive and fit beside the {} test share",
                    self.test_fraction
                )));
            }
            if i > 0 && b <= self.budgets[i - 1] {
                return Err(Error::Config("budgets must be strictly increasing".into()));
            }
        }
        self.finetune.validate()?;
        if let Some(s) = &self.scratch {
            s.validate()?;
        }
        Ok(())
    }
}

/// Freezes every recurrent layer, leaving the dense head trainable.
pub fn freeze_recurrent(mut model: RecurrentModel<f32>) -> RecurrentModel<f32> {
    model.freeze_recurrent();
    model
}

/// Fixed test split plus nested, stratified fine-tuning subsets drawn from
/// the remaining trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSubsets {
    pub test: Vec<usize>,
    /// One sorted index list per budget; each contains the previous one.
    pub budgets: Vec<Vec<usize>>,
}

pub fn budget_subsets(labels: &[usize], budgets: &[f64], test: &[usize], seed: u64) -> Result<BudgetSubsets> {
    let n = labels.len();
    let mut in_test = vec![false; n];
    for &i in test {
        in_test[i] = true;
    }
    let mut pool = class_members(labels);
    for (c, members) in pool.iter_mut().enumerate() {
        members.retain(|&i| !in_test[i]);
        rand::seq::SliceRandom::shuffle(members.as_mut_slice(), &mut substream(seed, "budget", &[c as u64]));
    }
    let mut taken = vec![0usize; pool.len()];
    let mut total = 0;
    let mut out = Vec::with_capacity(budgets.len());
    for &b in budgets {
        let target = (b * n as f64).round() as usize;
        let available: usize = pool.iter().map(Vec::len).sum();
        if target > available {
            return Err(Error::InvalidArgument(format!(
                "budget {b} needs {target} trials but only {available} remain outside the test split"
            )));
        }
        let remaining: Vec<usize> = pool.iter().zip(&taken).map(|(p, t)| p.len() - t).collect();
        let extra = proportional_allocation(&remaining, target.saturating_sub(total));
        for (t, e) in taken.iter_mut().zip(extra) {
            *t += e;
        }
        total = total.max(target);
        let mut subset: Vec<usize> = pool.iter().zip(&taken).flat_map(|(p, &t)| p[..t].iter().copied()).collect();
        subset.sort_unstable();
        if let Some(c) = taken.iter().position(|&t| t == 0) {
            return Err(Error::InvalidArgument(format!("budget {b} leaves class {c} without fine-tuning trials")));
        }
        out.push(subset);
    }
    Ok(BudgetSubsets { test: test.to_vec(), budgets: out })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRun {
    pub budget: f64,
    pub seed: u64,
    pub n_finetune: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub fit: FitOutcome,
    pub recurrent_hash_before: String,
    pub recurrent_hash_after: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScratchRun {
    pub budget: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub fit: FitOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub budget: f64,
    pub n_finetune: usize,
    pub transfer_accuracies: Vec<f64>,
    pub transfer_mean: f64,
    pub transfer_stdev: f64,
    pub scratch_accuracies: Vec<f64>,
    pub scratch_mean: Option<f64>,
    pub scratch_stdev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSweep {
    pub source_recurrent_hash: String,
    pub plan: TransferPlan,
    pub n_test: usize,
    pub runs: Vec<TransferRun>,
    pub baselines: Vec<ScratchRun>,
    pub budgets: Vec<BudgetSummary>,
    pub t_tests: Vec<TTestRecord>,
}

fn reinitialize_head(model: &mut RecurrentModel<f32>, seed: u64) -> Result<()> {
    let fresh = build_model::<f32>(model.specs(), seed)?;
    for (layer, new) in model.layers_mut().iter_mut().zip(fresh.layers()) {
        if let (Layer::Dense(d), Layer::Dense(n)) = (layer, new) {
            *d = n.clone();
        }
    }
    Ok(())
}

/// Fine-tunes the head of a frozen model on encoded covert trials and
/// evaluates it on the test indices.
///
/// `encoded` holds the frozen body's output for every trial
/// ([`RecurrentModel::encode`]).
#[allow(clippy::too_many_arguments)]
pub fn fine_tune(
    model: &mut RecurrentModel<f32>,
    encoded: ArrayView2<f32>,
    labels: &[usize],
    finetune: &[usize],
    test: &[usize],
    cfg: &TrainConfig,
    tag: &[u64],
) -> Result<(FitOutcome, ConfusionMatrix)> {
    if finetune.iter().any(|i| test.contains(i)) {
        return Err(Error::InvalidArgument("fine-tuning and test trials overlap".into()));
    }
    let y: Vec<usize> = finetune.iter().map(|&i| labels[i]).collect();
    for c in 0..model.n_classes() {
        if !y.contains(&c) {
            return Err(Error::InvalidArgument(format!("fine-tuning subset has no trials of class {c}")));
        }
    }
    let z_train = encoded.select(Axis(0), finetune);
    let outcome = fit(model, Inputs::Encoded(z_train.view()), &y, cfg, tag)?;
    let y_test: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let z_test = encoded.select(Axis(0), test);
    let confusion = evaluate(model, Inputs::Encoded(z_test.view()), &y_test)?;
    Ok((outcome, confusion))
}

/// Frozen-body encodings of every covert trial.
pub fn encode_all(model: &RecurrentModel<f32>, features: &FeatureTensor) -> Result<Array2<f32>> {
    let n = features.n_trials();
    let width = model.specs()[model.head_start()].input_size;
    let mut out = Array2::zeros((n, width));
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(64) {
        let x = gather_f32(features.data(), chunk);
        let z = model.encode(x.view())?;
        out.slice_mut(s![chunk[0]..chunk[0] + chunk.len(), ..]).assign(&z);
    }
    Ok(out)
}

enum Cell {
    Transfer(TransferRun),
    Scratch(ScratchRun),
}

/// Runs every (seed, budget) fine-tuning cell and its from-scratch baseline.
pub fn transfer_sweep(source: &RecurrentModel<f32>, covert: &FeatureTensor, plan: &TransferPlan) -> Result<TransferSweep> {
    plan.validate()?;
    if source.n_features() != covert.n_features() || source.n_classes() != covert.n_classes() {
        return Err(Error::Shape(format!(
            "source model maps {} features to {} classes; covert data has {} features and {} classes",
            source.n_features(),
            source.n_classes(),
            covert.n_features(),
            covert.n_classes()
        )));
    }
    let frozen = freeze_recurrent(source.clone());
    let source_hash = frozen.recurrent_fingerprint();
    let encoded = encode_all(&frozen, covert)?;
    let labels = covert.labels();
    let (_, test) = holdout_split(labels, plan.test_fraction, derive_seed(plan.split_seed, "covert-test", &[]))?;

    let subsets: Vec<BudgetSubsets> = plan
        .seeds
        .iter()
        .map(|&seed| budget_subsets(labels, &plan.budgets, &test, seed))
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for (si, &seed) in plan.seeds.iter().enumerate() {
        for bi in 0..plan.budgets.len() {
            jobs.push((si, seed, bi, false));
            if plan.scratch.is_some() {
                jobs.push((si, seed, bi, true));
            }
        }
    }
    let specs: Vec<LayerSpec> = source.specs().to_vec();
    let cells: Vec<Cell> = jobs
        .into_par_iter()
        .map(|(si, seed, bi, scratch)| {
            let budget = plan.budgets[bi];
            let train = &subsets[si].budgets[bi];
            let tag = [bi as u64];
            if scratch {
                let cfg = TrainConfig { seed, ..plan.scratch.expect("scratch jobs only when configured") };
                let (_, fit, confusion) =
                    train_and_test(covert, &specs, &cfg, train, &test, derive_seed(seed, "scratch-init", &tag), &tag)?;
                return Ok(Cell::Scratch(ScratchRun { budget, seed, accuracy: confusion.accuracy(), fit }));
            }
            let mut model = frozen.clone();
            if plan.reinit_head {
                reinitialize_head(&mut model, derive_seed(seed, "head-init", &tag))?;
            }
            let cfg = TrainConfig { seed, ..plan.finetune };
            let (fit, confusion) = fine_tune(&mut model, encoded.view(), labels, train, &test, &cfg, &tag)?;
            Ok(Cell::Transfer(TransferRun {
                budget,
                seed,
                n_finetune: train.len(),
                n_test: test.len(),
                accuracy: confusion.accuracy(),
                confusion,
                fit,
                recurrent_hash_before: source_hash.clone(),
                recurrent_hash_after: model.recurrent_fingerprint(),
            }))
        })
        .collect::<Result<_>>()?;

    let mut runs = Vec::new();
    let mut baselines = Vec::new();
    for c in cells {
        match c {
            Cell::Transfer(r) => runs.push(r),
            Cell::Scratch(r) => baselines.push(r),
        }
    }

    let accuracies = |list: &[(f64, u64, f64)], b: f64| -> Vec<f64> {
        plan.seeds
            .iter()
            .filter_map(|&s| list.iter().find(|r| r.0 == b && r.1 == s).map(|r| r.2))
            .collect()
    };
    let t_list: Vec<(f64, u64, f64)> = runs.iter().map(|r| (r.budget, r.seed, r.accuracy)).collect();
    let s_list: Vec<(f64, u64, f64)> = baselines.iter().map(|r| (r.budget, r.seed, r.accuracy)).collect();
    let mut summaries = Vec::new();
    for (bi, &b) in plan.budgets.iter().enumerate() {
        let ta = accuracies(&t_list, b);
        let sa = accuracies(&s_list, b);
        summaries.push(BudgetSummary {
            budget: b,
            n_finetune: subsets[0].budgets[bi].len(),
            transfer_mean: mean(&ta),
            transfer_stdev: stdev(&ta),
            scratch_mean: (!sa.is_empty()).then(|| mean(&sa)),
            scratch_stdev: (!sa.is_empty()).then(|| stdev(&sa)),
            transfer_accuracies: ta,
            scratch_accuracies: sa,
        });
    }

    let mut t_tests = Vec::new();
    if plan.seeds.len() >= 2 {
        let mut pairs = Vec::new();
        for i in 0..summaries.len() {
            for j in i + 1..summaries.len() {
                let t = paired_t_test(&summaries[j].transfer_accuracies, &summaries[i].transfer_accuracies)?;
                pairs.push((format!("transfer@{}", summaries[j].budget), format!("transfer@{}", summaries[i].budget), t));
            }
        }
        if !pairs.is_empty() {
            t_tests.extend(correct_family("budget-pairs", pairs));
        }
        if plan.scratch.is_some() {
            let vs = summaries
                .iter()
                .map(|s| {
                    paired_t_test(&s.transfer_accuracies, &s.scratch_accuracies)
                        .map(|t| (format!("transfer@{}", s.budget), format!("scratch@{}", s.budget), t))
                })
                .collect::<Result<Vec<_>>>()?;
            t_tests.extend(correct_family("transfer-vs-scratch", vs));
        }
    }

    Ok(TransferSweep {
        source_recurrent_hash: source_hash,
        plan: plan.clone(),
        n_test: test.len(),
        runs,
        baselines,
        budgets: summaries,
        t_tests,
    })
}

/// Trains the source model on overt data with an 80:20 split, then runs the
/// transfer sweep on covert data.
pub fn overt_to_covert(
    overt: &FeatureTensor,
    covert: &FeatureTensor,
    specs: &[LayerSpec],
    source_cfg: &TrainConfig,
    plan: &TransferPlan,
) -> Result<(RecurrentModel<f32>, HoldoutResult, TransferSweep)> {
    let (source, holdout) = run_holdout(overt, specs, source_cfg, 0.2, source_cfg.seed)?;
    let sweep = transfer_sweep(&source, covert, plan)?;
    Ok((source, holdout, sweep))
}
