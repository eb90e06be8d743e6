//! Recurrent cell parameters and single-step reference recurrences.
//!
//! Gate blocks are stacked row-wise: LSTM `[input, forget, candidate, output]`,
//! GRU `[update, reset, candidate]`. The batched layer code in
//! [`super::recurrent`] implements the same equations over whole sequences.

use ndarray::{Array1, Array2};

use super::scalar::{sigmoid, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

/// Weights of one recurrent direction.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams<T> {
    /// `gates·H × D`
    pub w_input: Array2<T>,
    /// `gates·H × H`
    pub w_recurrent: Array2<T>,
    /// `gates·H`
    pub bias: Array1<T>,
}

impl<T: Scalar> CellParams<T> {
    pub fn zeros(kind: CellKind, input: usize, hidden: usize) -> Self {
        let g = kind.gates() * hidden;
        Self {
            w_input: Array2::zeros((g, input)),
            w_recurrent: Array2::zeros((g, hidden)),
            bias: Array1::zeros(g),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_recurrent.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_input.ncols()
    }

    fn check(&self, kind: CellKind, x: &[T], h_prev: &[T]) -> Result<()> {
        let h = self.hidden();
        let g = kind.gates() * h;
        if self.w_input.nrows() != g || self.w_recurrent.nrows() != g || self.bias.len() != g {
            return Err(Error::Shape(format!("parameters do not describe a {kind:?} cell of {h} units")));
        }
        if x.len() != self.input() || h_prev.len() != h {
            return Err(Error::Shape(format!(
                "step input {} / state {} for a cell expecting {} / {h}",
                x.len(),
                h_prev.len(),
                self.input()
            )));
        }
        Ok(())
    }

    /// Pre-activation `W_in x + W_rec h + b` for gate rows `rows`.
    fn preactivation(&self, row: usize, x: &[T], h: &[T]) -> T {
        let wi = self.w_input.row(row);
        let wr = self.w_recurrent.row(row);
        let mut acc = self.bias[row];
        for (w, v) in wi.iter().zip(x) {
            acc += *w * *v;
        }
        for (w, v) in wr.iter().zip(h) {
            acc += *w * *v;
        }
        acc
    }
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_step<T: Scalar>(x: &[T], h_prev: &[T], c_prev: &[T], params: &CellParams<T>) -> Result<(Vec<T>, Vec<T>)> {
    params.check(CellKind::Lstm, x, h_prev)?;
    let h = params.hidden();
    if c_prev.len() != h {
        return Err(Error::Shape(format!("cell state {} for {h} units", c_prev.len())));
    }
    let mut h_t = vec![T::zero(); h];
    let mut c_t = vec![T::zero(); h];
    for j in 0..h {
        let i = sigmoid(params.preactivation(j, x, h_prev));
        let f = sigmoid(params.preactivation(h + j, x, h_prev));
        let g = params.preactivation(2 * h + j, x, h_prev).tanh();
        let o = sigmoid(params.preactivation(3 * h + j, x, h_prev));
        c_t[j] = f * c_prev[j] + i * g;
        h_t[j] = o * c_t[j].tanh();
    }
    Ok((h_t, c_t))
}

/// One GRU step: `h_t = (1 - z) ⊙ h_prev + z ⊙ tanh(W_n x + U_n (r ⊙ h_prev) + b_n)`.
pub fn gru_step<T: Scalar>(x: &[T], h_prev: &[T], params: &CellParams<T>) -> Result<Vec<T>> {
    params.check(CellKind::Gru, x, h_prev)?;
    let h = params.hidden();
    let z: Vec<T> = (0..h).map(|j| sigmoid(params.preactivation(j, x, h_prev))).collect();
    let r: Vec<T> = (0..h).map(|j| sigmoid(params.preactivation(h + j, x, h_prev))).collect();
    let rh: Vec<T> = r.iter().zip(h_prev).map(|(a, b)| *a * *b).collect();
    Ok((0..h)
        .map(|j| {
            let row = 2 * h + j;
            let mut acc = params.bias[row];
            for (w, v) in params.w_input.row(row).iter().zip(x) {
                acc += *w * *v;
            }
            for (w, v) in params.w_recurrent.row(row).iter().zip(&rh) {
                acc += *w * *v;
            }
            let n = acc.tanh();
            (T::one() - z[j]) * h_prev[j] + z[j] * n
        })
        .collect())
}
