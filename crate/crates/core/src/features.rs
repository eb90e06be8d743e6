//! Hilbert envelope (ENV) and temporal fine structure (TFS) features.
//!
//! The analytic signal is computed with the discrete frequency-domain method
//! over the whole epoch: forward DFT, zero the negative-frequency bins, double
//! the strictly positive ones, keep DC (and Nyquist for even lengths), inverse
//! DFT. The envelope is its magnitude and the fine structure is the signal
//! divided by the envelope.
//!
//! Feature tensors lay out the ENV block first (columns `0..C`) followed by the
//! TFS block (columns `C..2C`).

use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;
use rustfft::{num_complex::Complex64, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_file, write_file, Reader, Writer};
use crate::signal::{Condition, EpochSet};

/// Minimum signal length accepted by the Hilbert operations.
pub const MIN_LENGTH: usize = 4;

/// Real part (the signal itself) and imaginary part (its Hilbert transform).
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticSignal {
    pub real_part: Vec<f64>,
    pub imag_part: Vec<f64>,
}

impl AnalyticSignal {
    pub fn len(&self) -> usize {
        self.real_part.len()
    }

    pub fn is_empty(&self) -> bool {
        self.real_part.is_empty()
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.real_part
            .iter()
            .zip(&self.imag_part)
            .map(|(re, im)| (re * re + im * im).sqrt())
            .collect()
    }
}

/// Reusable FFT plans for a fixed signal length.
pub struct HilbertTransformer {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl HilbertTransformer {
    pub fn new(len: usize) -> Result<Self> {
        if len < MIN_LENGTH {
            return Err(Error::InvalidArgument(format!(
                "Hilbert transform needs at least {MIN_LENGTH} samples, got {len}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn analytic(&self, x: &[f64]) -> Result<AnalyticSignal> {
        if x.len() != self.len {
            return Err(Error::Shape(format!(
                "transformer planned for {} samples, got {}",
                self.len,
                x.len()
            )));
        }
        let n = self.len;
        let mut spec: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut spec);
        // bins 1..ceil(n/2) doubled, Nyquist (even n) kept, the rest zeroed
        let half = n.div_ceil(2);
        for bin in spec.iter_mut().take(half).skip(1) {
            *bin *= 2.0;
        }
        let first_zero = if n.is_multiple_of(2) { n / 2 + 1 } else { half };
        for bin in spec.iter_mut().skip(first_zero) {
            *bin = Complex64::new(0.0, 0.0);
        }
        self.inverse.process(&mut spec);
        let scale = 1.0 / n as f64;
        Ok(AnalyticSignal {
            real_part: x.to_vec(),
            imag_part: spec.iter().map(|c| c.im * scale).collect(),
        })
    }

    pub fn envelope(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.analytic(x)?.magnitude())
    }
}

/// Analytic signal `x + i·H{x}`.
pub fn analytic_signal(x: &[f64]) -> Result<AnalyticSignal> {
    HilbertTransformer::new(x.len())?.analytic(x)
}

/// Hilbert envelope `sqrt(x² + H{x}²)`.
pub fn envelope(x: &[f64]) -> Result<Vec<f64>> {
    Ok(analytic_signal(x)?.magnitude())
}

fn normalize(x: &[f64], env: &[f64], env_floor: f64) -> Vec<f64> {
    x.iter().zip(env).map(|(&v, &e)| v / e.max(env_floor)).collect()
}

/// Temporal fine structure `x / max(ENV, env_floor)`, bounded by [-1, 1].
pub fn fine_structure(x: &[f64], env_floor: f64) -> Result<Vec<f64>> {
    let env = envelope(x)?;
    Ok(normalize(x, &env, env_floor))
}

/// Envelope floor used when dividing by the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnvFloor {
    Absolute(f64),
    /// Fraction of the per trial-channel envelope peak, never below
    /// [`EnvFloor::ABSOLUTE_FALLBACK`].
    RelativeToPeak(f64),
}

impl EnvFloor {
    pub const ABSOLUTE_FALLBACK: f64 = 1e-20;

    pub fn resolve(self, env: &[f64]) -> f64 {
        match self {
            EnvFloor::Absolute(v) => v,
            EnvFloor::RelativeToPeak(rel) => {
                let peak = env.iter().copied().fold(0.0, f64::max);
                (rel * peak).max(Self::ABSOLUTE_FALLBACK)
            }
        }
    }
}

impl Default for EnvFloor {
    fn default() -> Self {
        EnvFloor::RelativeToPeak(1e-12)
    }
}

/// Per-trial `[ENV ‖ TFS]` matrices, `trials × timesteps × 2·channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    data: Array3<f64>,
    labels: Vec<usize>,
    condition: Condition,
    class_names: Vec<String>,
}

impl FeatureTensor {
    pub fn new(
        data: Array3<f64>,
        labels: Vec<usize>,
        condition: Condition,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if !data.dim().2.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "feature width {} is not ENV+TFS pairs",
                data.dim().2
            )));
        }
        if labels.len() != data.dim().0 {
            return Err(Error::Shape(format!("{} labels for {} trials", labels.len(), data.dim().0)));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidArgument(format!(
                "label {l} but only {} classes",
                class_names.len()
            )));
        }
        Ok(Self {
            data,
            labels,
            condition,
            class_names,
        })
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_trials(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_timesteps(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_features(&self) -> usize {
        self.data.dim().2
    }

    pub fn n_channels(&self) -> usize {
        self.n_features() / 2
    }

    pub fn trial(&self, i: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), i)
    }

    /// ENV block of one trial, `timesteps × channels`.
    pub fn envelope_block(&self, i: usize) -> ArrayView2<'_, f64> {
        let c = self.n_channels();
        self.trial(i).slice_move(ndarray::s![.., ..c])
    }

    /// TFS block of one trial, `timesteps × channels`.
    pub fn fine_structure_block(&self, i: usize) -> ArrayView2<'_, f64> {
        let c = self.n_channels();
        self.trial(i).slice_move(ndarray::s![.., c..])
    }

    /// Subset of trials, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            data: self.data.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            condition: self.condition,
            class_names: self.class_names.clone(),
        }
    }

    /// Replaces class names (the binary format stores label ids only).
    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if let Some(&l) = self.labels.iter().find(|&&l| l >= names.len()) {
            return Err(Error::InvalidArgument(format!(
                "label {l} but only {} class names given",
                names.len()
            )));
        }
        self.class_names = names;
        Ok(self)
    }

    /// Trial-averaged envelope per class, each `timesteps × channels`.
    pub fn mean_envelope_by_class(&self) -> Vec<Array2<f64>> {
        let (t, c) = (self.n_timesteps(), self.n_channels());
        let mut sums = vec![Array2::<f64>::zeros((t, c)); self.n_classes()];
        let mut counts = vec![0usize; self.n_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            sums[l] += &self.envelope_block(i);
            counts[l] += 1;
        }
        sums.into_iter()
            .zip(counts)
            .map(|(s, n)| if n > 0 { s / n as f64 } else { s })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, t, f) = self.data.dim();
        let mut w = Writer::default();
        w.bytes(b"FTEN");
        w.u32(1);
        w.u32(n as u32);
        w.u32(t as u32);
        w.u32(f as u32);
        w.u8(self.condition.code());
        for &l in &self.labels {
            w.u16(l as u16);
        }
        for &v in self.data.iter() {
            w.f32(v as f32);
        }
        w.buf
    }

    /// Class names are not part of the format; they default to `class<k>` for
    /// `k` up to the largest stored label.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        r.magic(b"FTEN")?;
        let version = r.u32()?;
        if version != 1 {
            return Err(r.err(format!("unsupported feature file version {version}")));
        }
        let n = r.u32()? as usize;
        let t = r.u32()? as usize;
        let f = r.u32()? as usize;
        let condition = Condition::from_code(r.u8()?).ok_or_else(|| r.err("bad condition code"))?;
        let labels = (0..n).map(|_| r.u16().map(usize::from)).collect::<Result<Vec<_>>>()?;
        let raw = r.f32_vec(n * t * f)?;
        r.finish()?;
        let data = Array3::from_shape_vec((n, t, f), raw)
            .map_err(|e| r.err(e.to_string()))?
            .mapv(f64::from);
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let names = (0..n_classes).map(|k| format!("class{k}")).collect();
        Self::new(data, labels, condition, names).map_err(|e| r.err(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, path)
    }
}

/// ENV and TFS for every trial and channel of `epochs`.
pub fn extract_features(epochs: &EpochSet, env_floor: EnvFloor) -> Result<FeatureTensor> {
    let (n, t, c) = epochs.data().dim();
    if n == 0 {
        return Err(Error::DegenerateInput("epoch set has no trials".into()));
    }
    let hilbert = HilbertTransformer::new(t)?;
    let trials: Vec<Array2<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let trial = epochs.trial(i);
            let mut out = Array2::<f64>::zeros((t, 2 * c));
            for ch in 0..c {
                let x = trial.column(ch).to_vec();
                let env = hilbert.envelope(&x)?;
                let tfs = normalize(&x, &env, env_floor.resolve(&env));
                out.column_mut(ch).assign(&ndarray::ArrayView1::from(&env));
                out.column_mut(c + ch).assign(&ndarray::ArrayView1::from(&tfs));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let views: Vec<_> = trials.iter().map(|a| a.view()).collect();
    let data = ndarray::stack(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
    FeatureTensor::new(
        data,
        epochs.labels().to_vec(),
        epochs.condition(),
        epochs.class_names().to_vec(),
    )
}

/// Per-channel Pearson correlation between two envelope matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCorrelation {
    pub r: Vec<f64>,
    /// Channels where either column had zero variance (their `r` is 0).
    pub zero_variance: Vec<bool>,
    /// Lag (in samples, `b` relative to `a`) at which `r` was taken.
    pub lag: Vec<i64>,
    pub max_r: f64,
    pub max_channel: usize,
}

fn pearson_slices(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Zero-lag Pearson correlation per channel and its maximum over channels.
pub fn envelope_correlation(env_a: ArrayView2<f64>, env_b: ArrayView2<f64>) -> Result<EnvelopeCorrelation> {
    envelope_correlation_lagged(env_a, env_b, 0)
}

/// Like [`envelope_correlation`] but keeps, per channel, the best correlation
/// over lags `-max_lag..=max_lag` samples.
pub fn envelope_correlation_lagged(
    env_a: ArrayView2<f64>,
    env_b: ArrayView2<f64>,
    max_lag: usize,
) -> Result<EnvelopeCorrelation> {
    if env_a.dim() != env_b.dim() {
        return Err(Error::Shape(format!(
            "envelope shapes differ: {:?} vs {:?}",
            env_a.dim(),
            env_b.dim()
        )));
    }
    let (t, c) = env_a.dim();
    if t < 2 || c == 0 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples and 1 channel, got {t}×{c}")));
    }
    if max_lag >= t - 1 {
        return Err(Error::InvalidArgument(format!("lag {max_lag} too large for {t} samples")));
    }
    let mut out = EnvelopeCorrelation {
        r: Vec::with_capacity(c),
        zero_variance: Vec::with_capacity(c),
        lag: Vec::with_capacity(c),
        max_r: f64::NEG_INFINITY,
        max_channel: 0,
    };
    for ch in 0..c {
        let a = env_a.column(ch).to_vec();
        let b = env_b.column(ch).to_vec();
        let mut best: Option<(f64, i64)> = None;
        let mut degenerate = false;
        for lag in -(max_lag as i64)..=(max_lag as i64) {
            let (sa, sb) = if lag >= 0 {
                (&a[..t - lag as usize], &b[lag as usize..])
            } else {
                (&a[(-lag) as usize..], &b[..t - (-lag) as usize])
            };
            match pearson_slices(sa, sb) {
                Some(r) if best.is_none_or(|(br, _)| r > br) => best = Some((r, lag)),
                Some(_) => {}
                None => degenerate = true,
            }
        }
        let (r, lag) = best.unwrap_or((0.0, 0));
        out.r.push(r);
        out.lag.push(lag);
        out.zero_variance.push(degenerate && best.is_none());
        if r > out.max_r {
            out.max_r = r;
            out.max_channel = ch;
        }
    }
    Ok(out)
}
