use covert_decode::features::{envelope_correlation, extract_features, EnvFloor};
use covert_decode::harness::stratified_kfold;
use covert_decode::synth::{generate_paired, SynthSpec};

/// Mean over classes and channels of the correlation between the overt and
/// covert class-mean envelopes.
fn class_envelope_correlation(spec: &SynthSpec) -> f64 {
    let (o, c, _) = generate_paired(spec).unwrap();
    let fo = extract_features(&o, EnvFloor::default()).unwrap();
    let fc = extract_features(&c, EnvFloor::default()).unwrap();
    let (mo, mc) = (fo.mean_envelope_by_class(), fc.mean_envelope_by_class());
    let per_class: Vec<f64> = mo
        .iter()
        .zip(&mc)
        .map(|(a, b)| {
            let r = envelope_correlation(a.view(), b.view()).unwrap();
            r.r.iter().sum::<f64>() / r.r.len() as f64
        })
        .collect();
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

#[test]
fn default_rho_gives_envelope_correlation_in_band() {
    let rs: Vec<f64> = (0..5)
        .map(|seed| class_envelope_correlation(&SynthSpec { seed, ..SynthSpec::default() }))
        .collect();
    let mean = rs.iter().sum::<f64>() / 5.0;
    assert!((0.65..=0.95).contains(&mean), "{rs:?}");
}

#[test]
fn envelope_correlation_tracks_rho() {
    for rho in [0.3, 0.5, 0.7, 0.9] {
        let rs: Vec<f64> = (0..2)
            .map(|seed| {
                class_envelope_correlation(&SynthSpec { cross_condition_rho: rho, seed, ..SynthSpec::default() })
            })
            .collect();
        let mean = rs.iter().sum::<f64>() / rs.len() as f64;
        assert!((mean - rho).abs() <= 0.15, "rho {rho}: {rs:?}");
    }
}

/// Five-fold nearest-centroid accuracy on per-channel time-averaged envelopes.
fn centroid_accuracy(spec: &SynthSpec) -> f64 {
    let (o, _, _) = generate_paired(spec).unwrap();
    let f = extract_features(&o, EnvFloor::default()).unwrap();
    let c = f.n_channels();
    let x: Vec<Vec<f64>> = (0..f.n_trials())
        .map(|i| (0..c).map(|ch| f.envelope_block(i).column(ch).mean().unwrap()).collect())
        .collect();
    let labels = f.labels();
    let plan = stratified_kfold(labels, 5, 0).unwrap();
    let mut correct = 0;
    for fold in 0..5 {
        let train = plan.train_indices(fold);
        let mut centroids = vec![vec![0.0; c]; f.n_classes()];
        let mut counts = vec![0.0; f.n_classes()];
        for &i in &train {
            counts[labels[i]] += 1.0;
            for ch in 0..c {
                centroids[labels[i]][ch] += x[i][ch];
            }
        }
        for (cen, n) in centroids.iter_mut().zip(&counts) {
            cen.iter_mut().for_each(|v| *v /= n);
        }
        for i in plan.test_indices(fold) {
            let dist = |cen: &Vec<f64>| cen.iter().zip(&x[i]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..f.n_classes())
                .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                .unwrap();
            correct += usize::from(best == labels[i]);
        }
    }
    correct as f64 / f.n_trials() as f64
}

#[test]
fn low_noise_classes_are_separable_by_mean_envelope() {
    let acc = centroid_accuracy(&SynthSpec { noise_sigma: 0.1, ..SynthSpec::default() });
    assert!(acc >= 0.9, "nearest-centroid accuracy {acc}");
}

#[test]
fn labels_are_balanced_in_both_conditions() {
    let spec = SynthSpec { trials_per_class: 7, n_channels: 2, sample_rate_hz: 125.0, ..SynthSpec::default() };
    let (o, c, _) = generate_paired(&spec).unwrap();
    for set in [&o, &c] {
        for k in 0..spec.n_classes {
            assert_eq!(set.labels().iter().filter(|&&l| l == k).count(), 7);
        }
    }
    assert_eq!(o.labels(), c.labels());
}
