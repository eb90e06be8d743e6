//! Stateless layer operations: dropout, dense + softmax and cross-entropy.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng as _;

use super::scalar::Scalar;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Probabilities below this are clamped before taking the logarithm.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

/// Inverted-dropout keep mask: zeros with probability `rate`, else
/// `1/(1−rate)`.
pub(crate) fn dropout_mask<T: Scalar>(shape: (usize, usize), rate: f64, rng: &mut Rng) -> Array2<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < rate { T::zero() } else { keep })
}

pub fn dropout_apply<T: Scalar>(x: ArrayView2<T>, rate: f64, mode: DropoutMode, rng: &mut Rng) -> Result<Array2<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == DropoutMode::Eval || rate == 0.0 {
        return Ok(x.to_owned());
    }
    Ok(&x * &dropout_mask::<T>(x.dim(), rate, rng))
}

/// Row-wise softmax with the maximum logit subtracted first.
pub fn softmax_rows<T: Scalar>(logits: ArrayView2<T>) -> Array2<T> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: T = row.iter().copied().sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// `softmax(hᵀW + b)` for one feature vector; `weight` is `D_in × C`.
pub fn dense_softmax_forward<T: Scalar>(h: ArrayView1<T>, weight: ArrayView2<T>, bias: ArrayView1<T>) -> Result<Array1<T>> {
    if weight.nrows() != h.len() || weight.ncols() != bias.len() {
        return Err(Error::Shape(format!(
            "dense layer {:?} with input {} and bias {}",
            weight.dim(),
            h.len(),
            bias.len()
        )));
    }
    let logits = h.dot(&weight) + bias;
    let n = logits.len();
    Ok(softmax_rows(logits.into_shape_with_order((1, n)).expect("row").view()).row(0).to_owned())
}

pub fn cross_entropy<T: Scalar>(probs: ArrayView1<T>, label: usize) -> Result<f64> {
    let p = probs
        .get(label)
        .ok_or_else(|| Error::InvalidArgument(format!("label {label} outside {} classes", probs.len())))?;
    Ok(-p.as_f64().max(PROB_CLAMP).ln())
}

/// Mean cross-entropy over the rows of `probs`.
pub fn mean_cross_entropy<T: Scalar>(probs: ArrayView2<T>, labels: &[usize]) -> Result<f64> {
    if probs.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!("{} probability rows for {} labels", probs.nrows(), labels.len())));
    }
    let mut total = 0.0;
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        total += cross_entropy(row, y)?;
    }
    Ok(total / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use ndarray::array;

    #[test]
    fn dropout_modes() {
        let mut rng = substream(1, "dropout", &[]);
        let x = Array2::<f64>::ones((3, 4));
        assert_eq!(dropout_apply(x.view(), 0.0, DropoutMode::Train, &mut rng).unwrap(), x);
        assert_eq!(dropout_apply(x.view(), 0.3, DropoutMode::Eval, &mut rng).unwrap(), x);
        let big = Array2::<f64>::ones((1000, 1000));
        let y = dropout_apply(big.view(), 0.3, DropoutMode::Train, &mut rng).unwrap();
        let mean = y.mean().unwrap();
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        let zeros = y.iter().filter(|v| **v == 0.0).count() as f64 / 1e6;
        assert!((zeros - 0.3).abs() < 0.005);
        assert!(dropout_apply(x.view(), 1.0, DropoutMode::Train, &mut rng).is_err());
    }

    #[test]
    fn softmax_values() {
        let p = softmax_rows(Array2::<f64>::zeros((1, 5)).view());
        assert!(p.iter().all(|v| (v - 0.2).abs() < 1e-15));

        let logits = array![[1.0f64, 2.0, 3.0]];
        let p = softmax_rows(logits.view());
        let denom = 1f64.exp() + 2f64.exp() + 3f64.exp();
        for (k, want) in [1f64.exp() / denom, 2f64.exp() / denom, 3f64.exp() / denom].iter().enumerate() {
            assert!((p[[0, k]] - want).abs() < 1e-12);
        }
        assert!((p.sum() - 1.0).abs() < 1e-12);
        let shifted = softmax_rows((&logits + 1000.0).view());
        for (a, b) in p.iter().zip(shifted.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_softmax_matches_manual() {
        let h = array![0.5f64, -1.0];
        let w = array![[1.0, 0.0, -1.0], [2.0, 1.0, 0.5]];
        let b = array![0.1, 0.2, 0.3];
        let p = dense_softmax_forward(h.view(), w.view(), b.view()).unwrap();
        let z: [f64; 3] = [0.5 - 2.0 + 0.1, -1.0 + 0.2, -0.5 - 0.5 + 0.3];
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        for k in 0..3 {
            assert!((p[k] - z[k].exp() / denom).abs() < 1e-12);
        }
        assert!(dense_softmax_forward(h.view(), w.t(), b.view()).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        assert_eq!(cross_entropy(array![0.0f64, 1.0].view(), 1).unwrap(), 0.0);
        let u = Array1::<f64>::from_elem(5, 0.2);
        assert!((cross_entropy(u.view(), 3).unwrap() - 5f64.ln()).abs() < 1e-12);
        assert!((cross_entropy(array![1.0f64, 0.0].view(), 1).unwrap() - (-(1e-12f64).ln())).abs() < 1e-9);

        let probs = array![[0.7f64, 0.2, 0.1], [0.1, 0.1, 0.8], [0.3, 0.4, 0.3]];
        let labels = [0, 2, 1];
        let oracle = (-(0.7f64.ln()) - 0.8f64.ln() - 0.4f64.ln()) / 3.0;
        assert!((mean_cross_entropy(probs.view(), &labels).unwrap() - oracle).abs() < 1e-12);
    }
}
