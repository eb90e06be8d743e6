//! Symmetric FastICA with a `tanh` contrast, for removing ocular and muscular
//! artifact components from filtered recordings.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::signal::EegRecording;

/// Result of [`fastica_decompose`].
#[derive(Debug, Clone)]
pub struct IcaDecomposition {
    /// `n_components × n_channels`, maps centred channel data to sources.
    pub unmixing: Array2<f64>,
    /// `n_channels × n_components`, maps sources back to channels.
    pub mixing: Array2<f64>,
    /// `n_components × n_samples`.
    pub sources: Array2<f64>,
    pub channel_means: Array1<f64>,
    /// `n_components × n_channels` PCA whitening used before rotation.
    pub whitening: Array2<f64>,
    pub report: IcaReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_change: f64,
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn to_ndarray(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// `(W Wᵀ)^{-1/2} W`: makes the rows of `w` orthonormal.
fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.max(f64::MIN_POSITIVE).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose() * w
}

/// Decomposes a recording into `n_components` independent sources.
///
/// Converges when the largest element-wise change of any unmixing row (sign
/// aligned) drops below `tol`; otherwise stops after `max_iter` rotations and
/// reports `converged = false`.
pub fn fastica_decompose(
    recording: &EegRecording,
    n_components: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<IcaDecomposition> {
    let (n_channels, n_samples) = recording.data().dim();
    if n_components == 0 || n_components > n_channels || n_channels > n_samples {
        return Err(Error::InvalidArgument(format!(
            "ICA needs 0 < n_components ({n_components}) <= n_channels ({n_channels}) <= n_samples ({n_samples})"
        )));
    }
    if max_iter == 0 || !(tol > 0.0) {
        return Err(Error::InvalidArgument("ICA needs max_iter > 0 and tol > 0".into()));
    }

    let means = recording.data().mean_axis(ndarray::Axis(1)).expect("non-empty");
    let mut centred = to_nalgebra(recording.data());
    for (i, mut row) in centred.row_iter_mut().enumerate() {
        row.add_scalar_mut(-means[i]);
    }

    let cov = &centred * centred.transpose() / n_samples as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n_channels).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let largest = eig.eigenvalues[order[0]];
    let smallest_idx = order[n_channels - 1];
    let smallest = eig.eigenvalues[smallest_idx];
    if !(largest > 0.0) || smallest <= largest * 1e-12 {
        let v = eig.eigenvectors.column(smallest_idx);
        let mut loadings: Vec<(usize, f64)> = v.iter().map(|x| x.abs()).enumerate().collect();
        loadings.sort_by(|a, b| b.1.total_cmp(&a.1));
        let labels: Vec<&str> = loadings
            .iter()
            .take(2)
            .map(|&(c, _)| recording.channel_labels()[c].as_str())
            .collect();
        return Err(Error::DegenerateInput(format!(
            "channel covariance is rank-deficient: whitened direction {} has variance {smallest:.3e} \
             (largest {largest:.3e}); it is spanned by channels {labels:?}",
            n_channels - 1
        )));
    }

    let kept = &order[..n_components];
    let whitening = DMatrix::from_fn(n_components, n_channels, |i, j| {
        eig.eigenvectors[(j, kept[i])] / eig.eigenvalues[kept[i]].sqrt()
    });
    // inverse of the whitening restricted to the kept subspace
    let dewhitening = DMatrix::from_fn(n_channels, n_components, |i, j| {
        eig.eigenvectors[(i, kept[j])] * eig.eigenvalues[kept[j]].sqrt()
    });
    let z = &whitening * &centred;

    let mut rng = substream(seed, "ica", &[]);
    let mut w = DMatrix::from_fn(n_components, n_components, |_, _| {
        StandardNormal.sample(&mut rng)
    });
    w = symmetric_decorrelation(&w);

    let n = n_samples as f64;
    let mut report = IcaReport {
        iterations: 0,
        converged: false,
        final_change: f64::INFINITY,
    };
    for iter in 1..=max_iter {
        let mut g = &w * &z;
        let mut g_prime_mean = vec![0.0; n_components];
        for (i, mut row) in g.row_iter_mut().enumerate() {
            let mut acc = 0.0;
            for v in row.iter_mut() {
                let t = v.tanh();
                *v = t;
                acc += 1.0 - t * t;
            }
            g_prime_mean[i] = acc / n;
        }
        let mut w_next = &g * z.transpose() / n;
        for i in 0..n_components {
            for j in 0..n_components {
                w_next[(i, j)] -= g_prime_mean[i] * w[(i, j)];
            }
        }
        let w_next = symmetric_decorrelation(&w_next);

        let change = (0..n_components)
            .map(|i| {
                let (mut plus, mut minus) = (0.0f64, 0.0f64);
                for j in 0..n_components {
                    minus = minus.max((w_next[(i, j)] - w[(i, j)]).abs());
                    plus = plus.max((w_next[(i, j)] + w[(i, j)]).abs());
                }
                plus.min(minus)
            })
            .fold(0.0, f64::max);
        w = w_next;
        report.iterations = iter;
        report.final_change = change;
        if change < tol {
            report.converged = true;
            break;
        }
    }

    let unmixing = &w * &whitening;
    let mixing = &dewhitening * w.transpose();
    let sources = &unmixing * &centred;
    Ok(IcaDecomposition {
        unmixing: to_ndarray(&unmixing),
        mixing: to_ndarray(&mixing),
        sources: to_ndarray(&sources),
        channel_means: means,
        whitening: to_ndarray(&whitening),
        report,
    })
}

/// Back-projects all components except `excluded` and restores channel means.
pub fn ica_reconstruct(decomp: &IcaDecomposition, excluded: &BTreeSet<usize>) -> Result<Array2<f64>> {
    let n_components = decomp.sources.nrows();
    if let Some(&bad) = excluded.iter().find(|&&k| k >= n_components) {
        return Err(Error::InvalidArgument(format!(
            "component {bad} out of range for {n_components} components"
        )));
    }
    let kept: Vec<usize> = (0..n_components).filter(|k| !excluded.contains(k)).collect();
    let mixing = decomp.mixing.select(ndarray::Axis(1), &kept);
    let sources = decomp.sources.select(ndarray::Axis(0), &kept);
    let mut out = mixing.dot(&sources);
    for (mut row, &m) in out.rows_mut().into_iter().zip(decomp.channel_means.iter()) {
        row += m;
    }
    Ok(out)
}

fn pearson(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b.iter()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Components whose absolute correlation with any of the `frontal` channels
/// of `data` exceeds `threshold` (candidate ocular artifacts).
pub fn flag_frontal_components(
    decomp: &IcaDecomposition,
    data: &Array2<f64>,
    frontal: &[usize],
    threshold: f64,
) -> Result<Vec<usize>> {
    if data.ncols() != decomp.sources.ncols() {
        return Err(Error::Shape("data and sources differ in length".into()));
    }
    if let Some(&c) = frontal.iter().find(|&&c| c >= data.nrows()) {
        return Err(Error::InvalidArgument(format!("frontal channel {c} out of range")));
    }
    Ok((0..decomp.sources.nrows())
        .filter(|&k| {
            frontal
                .iter()
                .any(|&c| pearson(decomp.sources.row(k), data.row(c)).abs() > threshold)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Marker;
    use rand::Rng;

    fn recording(data: Array2<f64>) -> EegRecording {
        let labels = (0..data.nrows()).map(|i| format!("ch{i}")).collect();
        EegRecording::new(data, 500.0, labels, Vec::<Marker>::new()).unwrap()
    }

    fn sawtooth(n: usize, freq: f64, fs: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let phase = (freq * i as f64 / fs).fract();
                2.0 * phase - 1.0
            })
            .collect()
    }

    fn uniform(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, "test-uniform", &[]);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn best_abs_corr(source: &[f64], decomp: &IcaDecomposition) -> f64 {
        let s = Array1::from(source.to_vec());
        (0..decomp.sources.nrows())
            .map(|k| pearson(decomp.sources.row(k), s.view()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn separates_sawtooth_from_noise() {
        let n = 5000;
        let s1 = sawtooth(n, 7.0, 500.0);
        let s2 = uniform(n, 1);
        let mix = [[1.0, 0.5], [0.6, 1.0]];
        let data = Array2::from_shape_fn((2, n), |(c, t)| mix[c][0] * s1[t] + mix[c][1] * s2[t]);
        let d = fastica_decompose(&recording(data), 2, 500, 1e-6, 3).unwrap();
        assert!(best_abs_corr(&s1, &d) > 0.95);
        assert!(best_abs_corr(&s2, &d) > 0.95);
    }

    #[test]
    fn identity_mixing_gives_signed_permutation() {
        let n = 6000;
        let s1: Vec<f64> = sawtooth(n, 7.0, 500.0).iter().map(|v| v * 3f64.sqrt()).collect();
        let s2: Vec<f64> = uniform(n, 2).iter().map(|v| v * 3f64.sqrt()).collect();
        let data = Array2::from_shape_fn((2, n), |(c, t)| if c == 0 { s1[t] } else { s2[t] });
        let d = fastica_decompose(&recording(data), 2, 500, 1e-8, 5).unwrap();
        let u = &d.unmixing;
        for row in u.rows() {
            let mut mags: Vec<f64> = row.iter().map(|v| v.abs()).collect();
            mags.sort_by(f64::total_cmp);
            assert!(mags[0] < 0.1, "{u:?}");
        }
    }

    #[test]
    fn duplicated_channel_is_degenerate() {
        let n = 1000;
        let s = uniform(n, 3);
        let t = sawtooth(n, 3.0, 500.0);
        let data = Array2::from_shape_fn((3, n), |(c, i)| if c == 2 { t[i] } else { s[i] });
        let err = fastica_decompose(&recording(data), 3, 100, 1e-6, 0).unwrap_err();
        match err {
            Error::DegenerateInput(msg) => assert!(msg.contains("ch0") && msg.contains("ch1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sources_are_white_and_reconstruction_is_exact() {
        let n = 4000;
        let mut rng = substream(9, "test", &[]);
        let data = Array2::from_shape_fn((4, n), |_| rng.random_range(-1.0..1.0))
            + Array2::from_shape_fn((4, n), |(c, _)| c as f64 * 10.0);
        let rec = recording(data.clone());
        let d = fastica_decompose(&rec, 4, 200, 1e-6, 1).unwrap();
        let cov = d.sources.dot(&d.sources.t()) / n as f64;
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((cov[(i, j)] - expect).abs() < 1e-6);
            }
        }
        let back = ica_reconstruct(&d, &BTreeSet::new()).unwrap();
        let rel = (&back - &data).mapv(|v| v * v).sum().sqrt() / data.mapv(|v| v * v).sum().sqrt();
        assert!(rel < 1e-6);

        let all: BTreeSet<usize> = (0..4).collect();
        let means_only = ica_reconstruct(&d, &all).unwrap();
        for (c, row) in means_only.rows().into_iter().enumerate() {
            assert!(row.iter().all(|&v| (v - d.channel_means[c]).abs() < 1e-12));
        }
        assert!(matches!(
            ica_reconstruct(&d, &BTreeSet::from([4])),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn removing_blink_component_cleans_frontal_channel() {
        let n = 10_000;
        let fs = 500.0;
        let blink: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                // 0.15 s wide bumps every 2.3 s
                let phase = (t % 2.3) - 1.0;
                8.0 * (-(phase * phase) / (2.0 * 0.075 * 0.075)).exp()
            })
            .collect();
        let sin: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / fs).sin()).collect();
        let saw = sawtooth(n, 7.0, fs);
        let u1 = uniform(n, 11);
        let u2 = uniform(n, 12);
        let sources = [&sin, &saw, &u1, &u2];
        let mut rng = substream(4, "mix", &[]);
        let mix = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
        let blink_weights = [1.0, 0.6, 0.2, 0.1, 0.05];
        let clean = Array2::from_shape_fn((5, n), |(c, t)| (0..4).map(|k| mix[(c, k)] * sources[k][t]).sum::<f64>());
        let dirty = Array2::from_shape_fn((5, n), |(c, t)| clean[(c, t)] + blink_weights[c] * blink[t]);

        let d = fastica_decompose(&recording(dirty.clone()), 5, 1000, 1e-8, 7).unwrap();
        let b = Array1::from(blink.clone());
        let artifact = (0..5)
            .max_by(|&i, &j| {
                pearson(d.sources.row(i), b.view()).abs().total_cmp(&pearson(d.sources.row(j), b.view()).abs())
            })
            .unwrap();
        let flagged = flag_frontal_components(&d, &dirty, &[0], 0.7).unwrap();
        assert_eq!(flagged, vec![artifact]);

        let cleaned = ica_reconstruct(&d, &BTreeSet::from([artifact])).unwrap();
        // the blink's DC level stays in the channel mean; compare fluctuations
        let diff = &cleaned.row(0) - &clean.row(0);
        let offset = diff.mean().unwrap();
        let residual = diff.mapv(|v| (v - offset).powi(2)).mean().unwrap().sqrt();
        let blink_mean = blink.iter().sum::<f64>() / n as f64;
        let planted = (blink.iter().map(|v| (v - blink_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(residual <= 0.2 * planted, "residual {residual} vs planted {planted}");
    }
}
