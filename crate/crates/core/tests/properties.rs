use std::collections::BTreeSet;
use std::f64::consts::PI;

use covert_decode::features::{analytic_signal, envelope, envelope_correlation, fine_structure};
use covert_decode::harness::{student_t_two_sided, ConfusionMatrix};
use covert_decode::nn::softmax_rows;
use covert_decode::signal::{
    design_butterworth_bandpass, design_notch, epoch_and_baseline, fastica_decompose, filter_zero_phase,
    ica_reconstruct, Condition, EegRecording, Marker,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

fn signal(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 8..max_len)
}

/// Two-sided Student-t tail for integer `df` by the finite trigonometric
/// series in `theta = atan(t / sqrt(df))`.
fn t_tail_series(t: f64, df: usize) -> f64 {
    let theta = (t.abs() / (df as f64).sqrt()).atan();
    let (s, c2) = (theta.sin(), theta.cos().powi(2));
    let a = if df % 2 == 1 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 0..(df - 1) / 2 {
            if k > 0 {
                term *= c2 * (2 * k) as f64 / (2 * k + 1) as f64;
            }
            sum += term;
        }
        let tail = if df > 1 { s * theta.cos() * sum } else { 0.0 };
        2.0 / PI * (theta + tail)
    } else {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 0..df / 2 {
            if k > 0 {
                term *= c2 * (2 * k - 1) as f64 / (2 * k) as f64;
            }
            sum += term;
        }
        s * sum
    };
    1.0 - a
}

#[test]
fn student_t_matches_series_oracle() {
    for df in 1..=30 {
        for i in 0..=40 {
            let t = -10.0 + 0.5 * i as f64;
            let p = student_t_two_sided(t, df as f64).unwrap();
            let oracle = t_tail_series(t, df);
            assert!((p - oracle).abs() < 1e-8, "df {df} t {t}: {p} vs {oracle}");
        }
    }
}

#[test]
fn default_filter_designs_are_stable() {
    for fs in [250.0, 500.0, 1000.0] {
        let notch = design_notch(50.0, 30.0, fs).unwrap();
        assert!(notch.is_stable());
        assert_eq!(notch.denominator[0], 1.0);
        for order in 1..=4 {
            let bp = design_butterworth_bandpass(order, 0.5, 80.0, fs).unwrap();
            assert!(bp.is_stable(), "order {order} at {fs} Hz");
            assert_eq!(bp.denominator[0], 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn designs_are_stable(order in 1usize..6, low in 0.1f64..20.0, width in 1.0f64..100.0, center in 10.0f64..120.0, q in 1.0f64..50.0) {
        let fs = 500.0;
        let high = (low + width).min(240.0);
        // Designs that cannot be represented stably are rejected, never returned.
        if let Ok(bp) = design_butterworth_bandpass(order, low, high, fs) {
            prop_assert!(bp.is_stable());
        }
        prop_assert!(design_notch(center, q, fs).unwrap().is_stable());
    }

    #[test]
    fn zero_phase_filter_is_linear(pair in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 200..600), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let coeffs = design_butterworth_bandpass(2, 1.0, 40.0, 250.0).unwrap();
        let (x, y): (Vec<f64>, Vec<f64>) = pair.into_iter().unzip();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
        let fx = filter_zero_phase(&x, &coeffs).unwrap();
        let fy = filter_zero_phase(&y, &coeffs).unwrap();
        let fm = filter_zero_phase(&mix, &coeffs).unwrap();
        let scale = fm.iter().map(|v| v.abs()).fold(1e-12, f64::max);
        for i in 0..fm.len() {
            prop_assert!((fm[i] - (alpha * fx[i] + beta * fy[i])).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn envelope_bounds_and_fine_structure_range(x in signal(300)) {
        let env = envelope(&x).unwrap();
        let tfs = fine_structure(&x, 1e-12).unwrap();
        for i in 0..x.len() {
            prop_assert!(env[i] >= 0.0);
            prop_assert!(env[i] + 1e-12 >= x[i].abs());
            prop_assert!(tfs[i].abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn envelope_scales_and_fine_structure_does_not(x in signal(300), alpha in 0.01f64..100.0) {
        let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
        let (e, es) = (envelope(&x).unwrap(), envelope(&scaled).unwrap());
        let (t, ts) = (fine_structure(&x, 1e-9).unwrap(), fine_structure(&scaled, 1e-9 * alpha).unwrap());
        let peak = e.iter().copied().fold(0.0, f64::max);
        for i in 0..x.len() {
            prop_assert!((es[i] - alpha * e[i]).abs() <= 1e-9 * alpha * peak.max(1.0));
            if e[i] > 1e-9 {
                prop_assert!((ts[i] - t[i]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn analytic_signal_has_no_negative_frequencies(x in signal(257)) {
        let a = analytic_signal(&x).unwrap();
        let n = x.len();
        let mut buf: Vec<Complex64> = a.real_part.iter().zip(&a.imag_part).map(|(&r, &i)| Complex64::new(r, i)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let total: f64 = buf.iter().map(|c| c.norm_sqr()).sum();
        let negative: f64 = buf[n / 2 + 1..].iter().map(|c| c.norm_sqr()).sum();
        prop_assert!(negative <= 1e-9 * total.max(1e-300));
    }

    #[test]
    fn pearson_is_bounded_and_affine_invariant(pair in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 8..100), slope in 0.1f64..10.0, shift in -10.0f64..10.0) {
        let a = Array2::from_shape_vec((pair.len(), 1), pair.iter().map(|p| p.0).collect()).unwrap();
        let b = Array2::from_shape_vec((pair.len(), 1), pair.iter().map(|p| p.1).collect()).unwrap();
        let r = envelope_correlation(a.view(), b.view()).unwrap().r[0];
        prop_assert!((-1.0..=1.0).contains(&r));
        let moved = b.mapv(|v| slope * v + shift);
        let r2 = envelope_correlation(a.view(), moved.view()).unwrap().r[0];
        prop_assert!((r - r2).abs() < 1e-9);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_ignore_shifts(logits in prop::collection::vec(-30.0f64..30.0, 5), shift in -50.0f64..50.0) {
        let x = Array2::from_shape_vec((1, 5), logits).unwrap();
        let p = softmax_rows(x.view());
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        let q = softmax_rows(x.mapv(|v| v + shift).view());
        for (a, b) in p.iter().zip(q.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn confusion_rows_count_classes(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)) {
        let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let cm = ConfusionMatrix::from_predictions(4, &truth, &pred).unwrap();
        for (k, &row) in cm.row_sums().iter().enumerate() {
            prop_assert_eq!(row as usize, truth.iter().filter(|&&t| t == k).count());
        }
        let counted = truth.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64;
        prop_assert!((cm.accuracy() - counted).abs() < 1e-12);
    }

    #[test]
    fn epochs_are_raw_minus_baseline(seed in any::<u64>(), n_markers in 1usize..8) {
        let fs = 100.0;
        let n = 1200;
        let data = Array2::from_shape_fn((2, n), |(c, t)| ((t as u64 ^ seed).wrapping_mul(2654435761) % 1000) as f64 / 100.0 + c as f64);
        // Markers spread over the whole recording; some fall too close to an edge.
        let markers: Vec<Marker> = (0..n_markers)
            .map(|k| Marker { sample_index: ((seed as usize % 97) + k * 170) % n, class_id: (k % 2) as u16 })
            .collect();
        let rec = EegRecording::new(data.clone(), fs, vec!["a".into(), "b".into()], markers.clone()).unwrap();
        let names = vec!["x".to_string(), "y".to_string()];
        let (epochs, report) = epoch_and_baseline(&rec, 2.0, 100.0, Condition::Overt, &names).unwrap_or_else(|_| panic!());
        prop_assert_eq!(report.n_epochs, n_markers - report.skipped.len());
        prop_assert_eq!(epochs.n_trials(), report.n_epochs);
        let skipped: BTreeSet<usize> = report.skipped.iter().map(|s| s.marker_index).collect();
        let kept: Vec<&Marker> = markers.iter().enumerate().filter(|(i, _)| !skipped.contains(i)).map(|(_, m)| m).collect();
        for (e, m) in kept.iter().enumerate() {
            for c in 0..2 {
                let base = data.row(c).slice(ndarray::s![m.sample_index - 10..m.sample_index]).mean().unwrap();
                for t in 0..200 {
                    prop_assert!((epochs.data()[[e, t, c]] + base - data[[c, m.sample_index + t]]).abs() < 1e-9);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ica_without_exclusions_is_identity(seed in any::<u64>()) {
        let n = 2000;
        let src = Array2::from_shape_fn((3, n), |(k, t)| {
            let x = t as f64 / 250.0;
            match k {
                0 => (2.0 * PI * 7.0 * x).sin(),
                1 => ((x * 3.0) % 1.0) - 0.5,
                _ => (((t as u64).wrapping_add(seed).wrapping_mul(6364136223846793005) >> 33) % 1000) as f64 / 1000.0,
            }
        });
        let mix = Array2::from_shape_vec((3, 3), vec![1.0, 0.5, 0.2, 0.3, 1.0, 0.4, 0.6, 0.1, 1.0]).unwrap();
        let offsets = Array1::from(vec![5.0, -2.0, 0.5]);
        let data = mix.dot(&src) + &offsets.insert_axis(ndarray::Axis(1));
        let rec = EegRecording::new(data.clone(), 250.0, vec!["a".into(), "b".into(), "c".into()], vec![]).unwrap();
        let d = fastica_decompose(&rec, 3, 400, 1e-8, seed).unwrap();
        let back = ica_reconstruct(&d, &BTreeSet::new()).unwrap();
        let err = (&back - &data).mapv(|v| v * v).sum().sqrt() / data.mapv(|v| v * v).sum().sqrt();
        prop_assert!(err < 1e-6, "relative error {}", err);
    }
}
