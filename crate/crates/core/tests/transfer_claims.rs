//! Budget-sweep behaviour of frozen transfer on the desk-scale synthetic
//! subject (16 channels at 125 Hz, BiLSTM 32/16).

use covert_decode::features::{extract_features, EnvFloor};
use covert_decode::harness::{run_holdout, TrainConfig};
use covert_decode::nn::{AdamConfig, Architecture, ModelKind};
use covert_decode::synth::{generate_paired, SynthSpec};
use covert_decode::transfer::{transfer_sweep, TransferPlan, TransferSweep};

/// One held-out covert trial out of 80.
const ONE_TRIAL: f64 = 1.0 / 80.0;

fn sweeps() -> Vec<TransferSweep> {
    let spec = SynthSpec { n_channels: 16, sample_rate_hz: 125.0, ..SynthSpec::default() };
    let (overt, covert, _) = generate_paired(&spec).unwrap();
    let fo = extract_features(&overt, EnvFloor::default()).unwrap();
    let fc = extract_features(&covert, EnvFloor::default()).unwrap();
    let arch = Architecture {
        kind: ModelKind::BiLstm,
        n_features: fo.n_features(),
        n_classes: 5,
        hidden: [32, 16],
        dropout: [0.3, 0.2],
        sum_merge_head: false,
    };
    let cfg = TrainConfig {
        adam: AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() },
        ..TrainConfig::default()
    };
    let (source, _) = run_holdout(&fo, &arch.layers(), &cfg, 0.2, 0).unwrap();
    // Five batches of five seeds, each with its own covert test split.
    (0..5u64)
        .map(|batch| {
            let plan = TransferPlan {
                split_seed: batch,
                seeds: (5 * batch..5 * batch + 5).collect(),
                finetune: TrainConfig { max_epochs: 40, ..cfg },
                scratch: None,
                ..TransferPlan::default()
            };
            transfer_sweep(&source, &fc, &plan).unwrap()
        })
        .collect()
}

#[test]
fn budget_sweep_claims() {
    let sweeps = sweeps();
    for (i, s) in sweeps.iter().enumerate() {
        let row: Vec<String> = s
            .budgets
            .iter()
            .map(|b| format!("{:.2}: {:.3} ± {:.3}", b.budget, b.transfer_mean, b.transfer_stdev))
            .collect();
        eprintln!("batch {i}: {}", row.join(", "));
    }

    // Spread at the largest budget does not exceed the smallest budget's by
    // more than one test trial.
    let holding = sweeps
        .iter()
        .filter(|s| s.budgets[3].transfer_stdev <= s.budgets[0].transfer_stdev + ONE_TRIAL)
        .count();
    assert!(holding >= 4, "spread shrinks or holds in only {holding} of 5 batches");

    let first = &sweeps[0];
    assert!(first.budgets[3].transfer_mean >= first.budgets[0].transfer_mean - 0.02);

    let late = first
        .t_tests
        .iter()
        .find(|t| t.a == "transfer@0.3" && t.b == "transfer@0.25")
        .expect("0.30 vs 0.25 comparison");
    assert!(late.p_corrected > 0.05, "{late:?}");
}
