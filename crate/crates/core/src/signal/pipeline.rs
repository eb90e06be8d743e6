//! The full per-session chain: notch, band-pass, optional ICA artifact
//! removal, then epoching with baseline correction.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    design_butterworth_bandpass, design_notch, epoch_and_baseline, fastica_decompose, filter_channels,
    flag_frontal_components, ica_reconstruct, Condition, EegRecording, EpochSet, EpochingReport,
    FilterCoefficients, IcaReport,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaSettings {
    /// 0 keeps as many components as channels.
    pub components: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Channel labels or zero-based indices used to flag ocular components.
    pub frontal_channels: Vec<String>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// `(center_hz, quality)`.
    pub notch: Option<(f64, f64)>,
    /// `(order, low_hz, high_hz)`.
    pub bandpass: Option<(usize, f64, f64)>,
    pub ica: Option<IcaSettings>,
    pub epoch_seconds: f64,
    pub baseline_ms: f64,
    pub class_names: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub filters: Vec<String>,
    pub ica: Option<IcaReport>,
    pub excluded_components: Vec<usize>,
    pub epoching: EpochingReport,
}

impl PreprocessConfig {
    /// Checks settings that do not depend on the recording's sample rate.
    pub fn validate(&self) -> Result<()> {
        if let Some((center, q)) = self.notch {
            if !(center > 0.0 && q > 0.0) {
                return Err(Error::InvalidDesign(format!("notch at {center} Hz with Q {q}")));
            }
        }
        if let Some((order, low, high)) = self.bandpass {
            if order == 0 || !(low > 0.0 && low < high) {
                return Err(Error::InvalidDesign(format!(
                    "band-pass order {order} with pass band {low}–{high} Hz (need 0 < low < high)"
                )));
            }
        }
        if !(self.epoch_seconds > 0.0 && self.baseline_ms > 0.0) {
            return Err(Error::Config("epoch length and baseline must be positive".into()));
        }
        if self.class_names.is_empty() {
            return Err(Error::Config("no class names configured".into()));
        }
        Ok(())
    }
}

/// Designs the configured filters for `sample_rate_hz`; this fails on bad
/// cut-offs before any data is touched.
pub fn design_filters(cfg: &PreprocessConfig, sample_rate_hz: f64) -> Result<Vec<FilterCoefficients>> {
    let mut out = Vec::new();
    if let Some((center, q)) = cfg.notch {
        out.push(design_notch(center, q, sample_rate_hz)?);
    }
    if let Some((order, low, high)) = cfg.bandpass {
        out.push(design_butterworth_bandpass(order, low, high, sample_rate_hz)?);
    }
    Ok(out)
}

fn resolve_channels(rec: &EegRecording, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            rec.channel_labels()
                .iter()
                .position(|l| l == n)
                .or_else(|| n.parse::<usize>().ok().filter(|&i| i < rec.n_channels()))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown frontal channel `{n}`")))
        })
        .collect()
}

pub fn preprocess(
    recording: &EegRecording,
    condition: Condition,
    cfg: &PreprocessConfig,
) -> Result<(EpochSet, PreprocessReport)> {
    cfg.validate()?;
    let filters = design_filters(cfg, recording.sample_rate_hz())?;
    let mut current = recording.with_data(filter_channels(recording.data(), &filters)?)?;

    let mut ica_report = None;
    let mut excluded = Vec::new();
    if let Some(ica) = cfg.ica.as_ref().filter(|i| !i.frontal_channels.is_empty()) {
        let frontal = resolve_channels(&current, &ica.frontal_channels)?;
        let n = if ica.components == 0 { current.n_channels() } else { ica.components };
        let decomp = fastica_decompose(&current, n, ica.max_iter, ica.tol, cfg.seed)?;
        excluded = flag_frontal_components(&decomp, current.data(), &frontal, ica.threshold)?;
        let set: BTreeSet<usize> = excluded.iter().copied().collect();
        current = current.with_data(ica_reconstruct(&decomp, &set)?)?;
        ica_report = Some(decomp.report);
    }

    let (epochs, epoching) = epoch_and_baseline(&current, cfg.epoch_seconds, cfg.baseline_ms, condition, &cfg.class_names)?;
    Ok((
        epochs,
        PreprocessReport {
            filters: filters.iter().map(|f| f.design_descriptor.clone()).collect(),
            ica: ica_report,
            excluded_components: excluded,
            epoching,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Marker;
    use ndarray::Array2;
    use std::f64::consts::PI;

    fn config() -> PreprocessConfig {
        PreprocessConfig {
            notch: Some((50.0, 30.0)),
            bandpass: Some((4, 0.5, 80.0)),
            ica: None,
            epoch_seconds: 2.0,
            baseline_ms: 100.0,
            class_names: vec!["a".into(), "b".into()],
            seed: 0,
        }
    }

    #[test]
    fn removes_line_noise_and_epochs() {
        let fs = 500.0;
        let n = 6000;
        let data = Array2::from_shape_fn((2, n), |(c, i)| {
            let t = i as f64 / fs;
            (2.0 * PI * 10.0 * t).sin() * (c + 1) as f64 + 3.0 * (2.0 * PI * 50.0 * t).sin()
        });
        let markers = vec![Marker { sample_index: 1000, class_id: 0 }, Marker { sample_index: 3000, class_id: 1 }];
        let rec = EegRecording::new(data, fs, vec!["a".into(), "b".into()], markers).unwrap();
        let (ep, report) = preprocess(&rec, Condition::Overt, &config()).unwrap();
        assert_eq!(ep.data().dim(), (2, 1000, 2));
        assert_eq!(report.filters.len(), 2);
        let x = ep.trial(0).column(0).to_owned();
        let residual: f64 = x
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let t = (1000 + i) as f64 / fs;
                (v - (2.0 * PI * 10.0 * t).sin()).abs()
            })
            .fold(0.0, f64::max);
        assert!(residual < 0.15, "{residual}");
    }

    #[test]
    fn inverted_passband_fails_before_filtering() {
        let mut cfg = config();
        cfg.bandpass = Some((4, 80.0, 0.5));
        assert!(matches!(cfg.validate(), Err(Error::InvalidDesign(_))));
        assert!(matches!(design_filters(&cfg, 500.0), Err(Error::InvalidDesign(_))));
    }

    #[test]
    fn ica_removes_planted_blinks() {
        let fs = 250.0;
        let n = 5000;
        let mut rng = crate::rng::substream(5, "blink-test", &[]);
        use rand::Rng;
        let brain: Vec<Vec<f64>> = (0..3).map(|k| (0..n).map(|i| ((k + 2) as f64 * 2.0 * PI * i as f64 / fs * 3.1).sin()).collect()).collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
        let blink: Vec<f64> = (0..n).map(|i| if (i % 500) < 40 { 8.0 * ((i % 500) as f64 / 40.0 * PI).sin() } else { 0.0 }).collect();
        let mix = [[1.0, 0.5, 0.2, 1.0], [0.3, 1.0, 0.4, 0.2], [0.2, 0.3, 1.0, 0.05], [0.6, 0.2, 0.7, 0.02]];
        let make = |blink_gain: f64| {
            let data = Array2::from_shape_fn((4, n), |(c, i)| {
                mix[c][0] * brain[0][i] + mix[c][1] * brain[1][i] + mix[c][2] * brain[2][i]
                    + blink_gain * mix[c][3] * blink[i]
                    + 0.01 * noise[i]
            });
            let markers = vec![Marker { sample_index: 500, class_id: 0 }];
            let labels = ["Fp1", "C3", "C4", "Oz"].map(String::from).to_vec();
            EegRecording::new(data, fs, labels, markers).unwrap()
        };
        let mut cfg = config();
        cfg.notch = None;
        cfg.bandpass = None;
        let (clean, _) = preprocess(&make(0.0), Condition::Overt, &cfg).unwrap();
        let (dirty, _) = preprocess(&make(1.0), Condition::Overt, &cfg).unwrap();
        cfg.ica = Some(IcaSettings {
            components: 0,
            max_iter: 500,
            tol: 1e-8,
            frontal_channels: vec!["Fp1".into()],
            threshold: 0.7,
        });
        let (cleaned, report) = preprocess(&make(1.0), Condition::Overt, &cfg).unwrap();
        assert_eq!(report.excluded_components.len(), 1);
        let err = |a: &EpochSet| (a.data() - clean.data()).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err(&dirty) > 4.0);
        assert!(err(&cleaned) < 0.5, "{}", err(&cleaned));
    }
}
