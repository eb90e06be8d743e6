//! IIR filter design (notch, Butterworth band-pass via bilinear transform)
//! and forward-backward zero-phase application.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transfer-function coefficients `b / a` with `a[0] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    pub design_descriptor: String,
}

impl FilterCoefficients {
    /// Normalizes so that `denominator[0] == 1`.
    pub fn new(mut numerator: Vec<f64>, mut denominator: Vec<f64>, descriptor: String) -> Result<Self> {
        let a0 = *denominator
            .first()
            .ok_or_else(|| Error::InvalidDesign("empty denominator".into()))?;
        if numerator.is_empty() {
            return Err(Error::InvalidDesign("empty numerator".into()));
        }
        if a0 == 0.0 || !a0.is_finite() {
            return Err(Error::InvalidDesign(format!("leading denominator coefficient {a0}")));
        }
        numerator.iter_mut().for_each(|c| *c /= a0);
        denominator.iter_mut().for_each(|c| *c /= a0);
        Ok(Self {
            numerator,
            denominator,
            design_descriptor: descriptor,
        })
    }

    /// Filter order (number of denominator coefficients minus one).
    pub fn order(&self) -> usize {
        self.numerator.len().max(self.denominator.len()) - 1
    }

    /// Complex frequency response `H(e^{jω})` at `freq_hz`.
    pub fn response(&self, freq_hz: f64, sample_rate_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        let eval = |coeffs: &[f64]| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| Complex64::from_polar(c, -w * k as f64))
                .sum::<Complex64>()
        };
        eval(&self.numerator) / eval(&self.denominator)
    }

    pub fn gain_db(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        20.0 * self.response(freq_hz, sample_rate_hz).norm().log10()
    }

    /// Roots of the denominator polynomial, via companion-matrix eigenvalues.
    pub fn poles(&self) -> Vec<Complex64> {
        let a = trim_trailing_zeros(&self.denominator);
        let n = a.len().saturating_sub(1);
        if n == 0 {
            return Vec::new();
        }
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            companion[(0, j)] = -a[j + 1] / a[0];
        }
        for i in 1..n {
            companion[(i, i - 1)] = 1.0;
        }
        companion
            .complex_eigenvalues()
            .iter()
            .map(|c| Complex64::new(c.re, c.im))
            .collect()
    }

    /// All poles strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }
}

fn trim_trailing_zeros(c: &[f64]) -> &[f64] {
    let end = c.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1);
    &c[..end]
}

/// Second-order IIR notch at `center_hz` with quality factor `quality`.
pub fn design_notch(center_hz: f64, quality: f64, sample_rate_hz: f64) -> Result<FilterCoefficients> {
    let nyquist = sample_rate_hz / 2.0;
    if !(sample_rate_hz > 0.0) || !(quality > 0.0) {
        return Err(Error::InvalidDesign(format!(
            "notch needs positive quality and sample rate (Q={quality}, fs={sample_rate_hz})"
        )));
    }
    if !(center_hz > 0.0 && center_hz < nyquist) {
        return Err(Error::InvalidDesign(format!(
            "notch center {center_hz} Hz must lie in (0, {nyquist}) Hz"
        )));
    }
    let w0 = 2.0 * PI * center_hz / sample_rate_hz;
    let bandwidth = w0 / quality;
    // -3 dB bandwidth convention: tan(bw/2) * sqrt(1 - g²) / g with g = 1/√2.
    let beta = (bandwidth / 2.0).tan();
    let gain = 1.0 / (1.0 + beta);
    let cos_w0 = w0.cos();
    FilterCoefficients::new(
        vec![gain, -2.0 * gain * cos_w0, gain],
        vec![1.0, -2.0 * gain * cos_w0, 2.0 * gain - 1.0],
        format!("notch center={center_hz}Hz Q={quality} fs={sample_rate_hz}Hz"),
    )
}

/// Digital Butterworth band-pass of prototype order `order` (the resulting
/// transfer function has order `2 * order`), designed by prewarped bilinear
/// transform of the analog low-pass prototype.
pub fn design_butterworth_bandpass(
    order: usize,
    low_hz: f64,
    high_hz: f64,
    sample_rate_hz: f64,
) -> Result<FilterCoefficients> {
    let nyquist = sample_rate_hz / 2.0;
    if order == 0 {
        return Err(Error::InvalidDesign("Butterworth order must be at least 1".into()));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::InvalidDesign(format!("sample rate {sample_rate_hz}")));
    }
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(Error::InvalidDesign(format!(
            "band-pass edges must satisfy 0 < low < high < {nyquist} Hz, got low={low_hz} high={high_hz}"
        )));
    }

    // Analog prototype poles on the left half of the unit circle.
    let n = order as i64;
    let proto: Vec<Complex64> = (0..n)
        .map(|i| {
            let m = (-n + 1 + 2 * i) as f64;
            -Complex64::from_polar(1.0, PI * m / (2.0 * n as f64))
        })
        .collect();

    let warp = |f: f64| 2.0 * sample_rate_hz * (PI * f / sample_rate_hz).tan();
    let (wl, wh) = (warp(low_hz), warp(high_hz));
    let bw = wh - wl;
    let w0 = (wl * wh).sqrt();

    // Low-pass to band-pass: each pole splits into a conjugate-free pair,
    // `order` zeros land at s = 0.
    let mut analog_poles = Vec::with_capacity(2 * order);
    for p in &proto {
        let half = p * bw / 2.0;
        let disc = (half * half - w0 * w0).sqrt();
        analog_poles.push(half + disc);
        analog_poles.push(half - disc);
    }
    let analog_zeros = vec![Complex64::new(0.0, 0.0); order];
    let analog_gain = bw.powi(order as i32);

    // Bilinear transform; zeros at infinity map to z = -1.
    let fs2 = 2.0 * sample_rate_hz;
    let map = |s: &Complex64| (fs2 + s) / (fs2 - s);
    let mut zeros: Vec<Complex64> = analog_zeros.iter().map(map).collect();
    zeros.extend(std::iter::repeat_n(
        Complex64::new(-1.0, 0.0),
        analog_poles.len() - analog_zeros.len(),
    ));
    let poles: Vec<Complex64> = analog_poles.iter().map(map).collect();
    let num: Complex64 = analog_zeros.iter().map(|z| fs2 - z).product();
    let den: Complex64 = analog_poles.iter().map(|p| fs2 - p).product();
    let gain = analog_gain * (num / den).re;

    let b: Vec<f64> = poly_from_roots(&zeros).into_iter().map(|c| c * gain).collect();
    let a = poly_from_roots(&poles);
    let coeffs = FilterCoefficients::new(
        b,
        a,
        format!("butterworth bandpass order={order} low={low_hz}Hz high={high_hz}Hz fs={sample_rate_hz}Hz"),
    )?;
    // Narrow low bands at high order put poles so close to z = 1 that the
    // expanded polynomial loses them to rounding.
    if !coeffs.is_stable() {
        return Err(Error::InvalidDesign(format!(
            "order {order} band {low_hz}-{high_hz} Hz at {sample_rate_hz} Hz is not stable in transfer-function form"
        )));
    }
    Ok(coeffs)
}

/// Monic polynomial coefficients (highest power first) with the given roots.
/// Roots are assumed to come in conjugate pairs, so the result is real.
fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs.into_iter().map(|c| c.re).collect()
}

/// Pads `b` and `a` to a common length.
fn padded(coeffs: &FilterCoefficients) -> (Vec<f64>, Vec<f64>) {
    let n = coeffs.numerator.len().max(coeffs.denominator.len());
    let mut b = coeffs.numerator.clone();
    let mut a = coeffs.denominator.clone();
    b.resize(n, 0.0);
    a.resize(n, 0.0);
    (b, a)
}

/// Initial state of the transposed direct form II filter for a unit step,
/// i.e. the steady state reached after an infinitely long constant input.
pub fn steady_state_initial(coeffs: &FilterCoefficients) -> Result<Vec<f64>> {
    let (b, a) = padded(coeffs);
    let n = b.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    let m = n - 1;
    // (I - companion(a)^T) zi = b[1:] - a[1:] * b[0]
    let mut lhs = DMatrix::<f64>::identity(m, m);
    for i in 0..m {
        lhs[(i, 0)] += a[i + 1];
        if i + 1 < m {
            lhs[(i, i + 1)] -= 1.0;
        }
    }
    let rhs = DVector::from_iterator(m, (0..m).map(|i| b[i + 1] - a[i + 1] * b[0]));
    lhs.lu()
        .solve(&rhs)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::InvalidDesign("filter has a pole at z = 1".into()))
}

/// Single causal pass, transposed direct form II, starting from `state`.
pub fn lfilter(coeffs: &FilterCoefficients, signal: &[f64], state: Option<&[f64]>) -> Vec<f64> {
    let (b, a) = padded(coeffs);
    let n = b.len();
    let mut z = vec![0.0; n - 1];
    if let Some(s) = state {
        z.copy_from_slice(s);
    }
    let mut out = Vec::with_capacity(signal.len());
    for &x in signal {
        let y = b[0] * x + z.first().copied().unwrap_or(0.0);
        for i in 0..n.saturating_sub(2) {
            z[i] = b[i + 1] * x + z[i + 1] - a[i + 1] * y;
        }
        if n >= 2 {
            z[n - 2] = b[n - 1] * x - a[n - 1] * y;
        }
        out.push(y);
    }
    out
}

/// Number of samples reflected onto each end before forward-backward filtering.
pub fn edge_padding(coeffs: &FilterCoefficients) -> usize {
    3 * coeffs.numerator.len().max(coeffs.denominator.len())
}

/// Forward-backward filtering: magnitude response |H|², zero phase.
///
/// Both ends are extended by odd reflection of [`edge_padding`] samples and the
/// filter state is initialised to the steady state of the first sample.
pub fn filter_zero_phase(signal: &[f64], coeffs: &FilterCoefficients) -> Result<Vec<f64>> {
    let pad = edge_padding(coeffs);
    let n = signal.len();
    if n <= pad {
        return Err(Error::Epoching(format!(
            "signal of {n} samples is too short for zero-phase filtering (needs more than {pad})"
        )));
    }
    let zi = steady_state_initial(coeffs)?;

    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (signal[0], signal[n - 1]);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));

    let scaled = |x0: f64| zi.iter().map(|z| z * x0).collect::<Vec<_>>();
    let mut y = lfilter(coeffs, &ext, Some(&scaled(ext[0])));
    y.reverse();
    let mut y = lfilter(coeffs, &y, Some(&scaled(y[0])));
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}
