//! Batched unidirectional and bidirectional recurrent layers with
//! backpropagation through time.
//!
//! Sequences are time-major matrices: row `t * batch + b` holds the features
//! of sample `b` at time `t`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};

use super::cell::{CellKind, CellParams};
use super::scalar::{sigmoid, Scalar};
use super::spec::MergeMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentLayer<T> {
    pub cell: CellKind,
    pub merge: MergeMode,
    pub return_sequences: bool,
    /// Forward direction first, then (for bidirectional layers) backward.
    pub directions: Vec<CellParams<T>>,
}

pub(crate) struct DirectionCache<T> {
    /// Activated gates, `steps·batch × gates·H`.
    gates: Array2<T>,
    h: Array2<T>,
    /// LSTM cell state, or `r ⊙ h_prev` for the GRU.
    aux: Array2<T>,
}

pub(crate) struct RecurrentCache<T> {
    input: Array2<T>,
    steps: usize,
    batch: usize,
    dirs: Vec<DirectionCache<T>>,
}

#[inline]
fn time_of(step: usize, steps: usize, reverse: bool) -> usize {
    if reverse {
        steps - 1 - step
    } else {
        step
    }
}

fn forward_direction<T: Scalar>(
    p: &CellParams<T>,
    cell: CellKind,
    x: &Array2<T>,
    steps: usize,
    batch: usize,
    reverse: bool,
) -> DirectionCache<T> {
    let hs = p.hidden();
    let g = cell.gates() * hs;
    let mut gates = Array2::<T>::zeros((steps * batch, g));
    general_mat_mul(T::one(), x, &p.w_input.t(), T::zero(), &mut gates);
    gates += &p.bias;
    let mut h = Array2::<T>::zeros((steps * batch, hs));
    let mut aux = Array2::<T>::zeros((steps * batch, hs));

    for step in 0..steps {
        let t = time_of(step, steps, reverse);
        let prev = (step > 0).then(|| time_of(step - 1, steps, reverse));
        let rows = t * batch..(t + 1) * batch;
        match cell {
            CellKind::Lstm => {
                if let Some(tp) = prev {
                    let hp = h.slice(s![tp * batch..(tp + 1) * batch, ..]);
                    let mut gt = gates.slice_mut(s![rows.clone(), ..]);
                    general_mat_mul(T::one(), &hp, &p.w_recurrent.t(), T::one(), &mut gt);
                }
                let gs = gates.as_slice_mut().expect("standard layout");
                let h_all = h.as_slice_mut().expect("standard layout");
                let c_all = aux.as_slice_mut().expect("standard layout");
                for b in 0..batch {
                    let r = t * batch + b;
                    let base = r * g;
                    let out = r * hs;
                    let prev_c = prev.map(|tp| (tp * batch + b) * hs);
                    for j in 0..hs {
                        let i = sigmoid(gs[base + j]);
                        let f = sigmoid(gs[base + hs + j]);
                        let cand = gs[base + 2 * hs + j].tanh();
                        let o = sigmoid(gs[base + 3 * hs + j]);
                        gs[base + j] = i;
                        gs[base + hs + j] = f;
                        gs[base + 2 * hs + j] = cand;
                        gs[base + 3 * hs + j] = o;
                        let cp = prev_c.map_or(T::zero(), |pc| c_all[pc + j]);
                        let c = f * cp + i * cand;
                        c_all[out + j] = c;
                        h_all[out + j] = o * c.tanh();
                    }
                }
            }
            CellKind::Gru => {
                if let Some(tp) = prev {
                    let hp = h.slice(s![tp * batch..(tp + 1) * batch, ..]);
                    let mut gt = gates.slice_mut(s![rows.clone(), ..2 * hs]);
                    let u = p.w_recurrent.slice(s![..2 * hs, ..]);
                    general_mat_mul(T::one(), &hp, &u.t(), T::one(), &mut gt);
                }
                {
                    let gs = gates.as_slice_mut().expect("standard layout");
                    let h_all = h.as_slice().expect("standard layout");
                    let rh_all = aux.as_slice_mut().expect("standard layout");
                    for b in 0..batch {
                        let r = t * batch + b;
                        let base = r * g;
                        let prev_h = prev.map(|tp| (tp * batch + b) * hs);
                        for j in 0..hs {
                            let z = sigmoid(gs[base + j]);
                            let rg = sigmoid(gs[base + hs + j]);
                            gs[base + j] = z;
                            gs[base + hs + j] = rg;
                            rh_all[r * hs + j] = prev_h.map_or(T::zero(), |ph| rg * h_all[ph + j]);
                        }
                    }
                }
                if prev.is_some() {
                    let rh = aux.slice(s![rows.clone(), ..]);
                    let mut gt = gates.slice_mut(s![rows.clone(), 2 * hs..]);
                    let u = p.w_recurrent.slice(s![2 * hs.., ..]);
                    general_mat_mul(T::one(), &rh, &u.t(), T::one(), &mut gt);
                }
                let gs = gates.as_slice_mut().expect("standard layout");
                let h_all = h.as_slice_mut().expect("standard layout");
                for b in 0..batch {
                    let r = t * batch + b;
                    let base = r * g;
                    let prev_h = prev.map(|tp| (tp * batch + b) * hs);
                    for j in 0..hs {
                        let n = gs[base + 2 * hs + j].tanh();
                        gs[base + 2 * hs + j] = n;
                        let z = gs[base + j];
                        let hp = prev_h.map_or(T::zero(), |ph| h_all[ph + j]);
                        h_all[r * hs + j] = (T::one() - z) * hp + z * n;
                    }
                }
            }
        }
    }
    DirectionCache { gates, h, aux }
}

/// `h` of the previous step aligned with each row (zeros at the first step).
fn shifted_state<T: Scalar>(h: &Array2<T>, steps: usize, batch: usize, reverse: bool) -> Array2<T> {
    let mut out = Array2::<T>::zeros(h.dim());
    for step in 1..steps {
        let t = time_of(step, steps, reverse);
        let tp = time_of(step - 1, steps, reverse);
        out.slice_mut(s![t * batch..(t + 1) * batch, ..])
            .assign(&h.slice(s![tp * batch..(tp + 1) * batch, ..]));
    }
    out
}

/// Returns the gradient w.r.t. the pre-activations of every gate, and adds
/// the parameter gradients into `grads` when given.
#[allow(clippy::too_many_arguments)]
fn backward_direction<T: Scalar>(
    p: &CellParams<T>,
    cell: CellKind,
    cache: &DirectionCache<T>,
    steps: usize,
    batch: usize,
    reverse: bool,
    dh_out: &Array2<T>,
    grads: Option<&mut CellParams<T>>,
) -> Array2<T> {
    let hs = p.hidden();
    let g = cell.gates() * hs;
    let mut dpre = Array2::<T>::zeros((steps * batch, g));
    let mut dh_next = Array2::<T>::zeros((batch, hs));
    let gs = cache.gates.as_slice().expect("standard layout");
    let h_all = cache.h.as_slice().expect("standard layout");
    let aux_all = cache.aux.as_slice().expect("standard layout");
    let dh_all = dh_out.as_slice().expect("standard layout");

    match cell {
        CellKind::Lstm => {
            let mut dc_next = Array2::<T>::zeros((batch, hs));
            for step in (0..steps).rev() {
                let t = time_of(step, steps, reverse);
                let prev = (step > 0).then(|| time_of(step - 1, steps, reverse));
                {
                    let dp = dpre.as_slice_mut().expect("standard layout");
                    let dhn = dh_next.as_slice().expect("standard layout");
                    let dcn = dc_next.as_slice_mut().expect("standard layout");
                    for b in 0..batch {
                        let r = t * batch + b;
                        let base = r * g;
                        let prev_c = prev.map(|tp| (tp * batch + b) * hs);
                        for j in 0..hs {
                            let k = b * hs + j;
                            let dh = dh_all[r * hs + j] + dhn[k];
                            let (i, f, cand, o) =
                                (gs[base + j], gs[base + hs + j], gs[base + 2 * hs + j], gs[base + 3 * hs + j]);
                            let tc = aux_all[r * hs + j].tanh();
                            let d_o = dh * tc;
                            let dc = dh * o * (T::one() - tc * tc) + dcn[k];
                            let cp = prev_c.map_or(T::zero(), |pc| aux_all[pc + j]);
                            dp[base + j] = dc * cand * i * (T::one() - i);
                            dp[base + hs + j] = dc * cp * f * (T::one() - f);
                            dp[base + 2 * hs + j] = dc * i * (T::one() - cand * cand);
                            dp[base + 3 * hs + j] = d_o * o * (T::one() - o);
                            dcn[k] = dc * f;
                        }
                    }
                }
                if step > 0 {
                    let d = dpre.slice(s![t * batch..(t + 1) * batch, ..]);
                    general_mat_mul(T::one(), &d, &p.w_recurrent, T::zero(), &mut dh_next);
                }
            }
            if let Some(grads) = grads {
                let hprev = shifted_state(&cache.h, steps, batch, reverse);
                general_mat_mul(T::one(), &dpre.t(), &hprev, T::one(), &mut grads.w_recurrent);
            }
        }
        CellKind::Gru => {
            let mut dhp = Array2::<T>::zeros((batch, hs));
            let mut d_rh = Array2::<T>::zeros((batch, hs));
            let u_zr = p.w_recurrent.slice(s![..2 * hs, ..]);
            let u_n = p.w_recurrent.slice(s![2 * hs.., ..]);
            for step in (0..steps).rev() {
                let t = time_of(step, steps, reverse);
                let prev = (step > 0).then(|| time_of(step - 1, steps, reverse));
                let rows = t * batch..(t + 1) * batch;
                {
                    let dp = dpre.as_slice_mut().expect("standard layout");
                    let dhn = dh_next.as_slice().expect("standard layout");
                    let acc = dhp.as_slice_mut().expect("standard layout");
                    for b in 0..batch {
                        let r = t * batch + b;
                        let base = r * g;
                        let prev_h = prev.map(|tp| (tp * batch + b) * hs);
                        for j in 0..hs {
                            let k = b * hs + j;
                            let dh = dh_all[r * hs + j] + dhn[k];
                            let z = gs[base + j];
                            let n = gs[base + 2 * hs + j];
                            let hp = prev_h.map_or(T::zero(), |ph| h_all[ph + j]);
                            let dn = dh * z;
                            let dz = dh * (n - hp);
                            acc[k] = dh * (T::one() - z);
                            dp[base + 2 * hs + j] = dn * (T::one() - n * n);
                            dp[base + j] = dz * z * (T::one() - z);
                        }
                    }
                }
                {
                    let dn = dpre.slice(s![rows.clone(), 2 * hs..]);
                    general_mat_mul(T::one(), &dn, &u_n, T::zero(), &mut d_rh);
                }
                {
                    let dp = dpre.as_slice_mut().expect("standard layout");
                    let drh = d_rh.as_slice().expect("standard layout");
                    let acc = dhp.as_slice_mut().expect("standard layout");
                    for b in 0..batch {
                        let r = t * batch + b;
                        let base = r * g;
                        let prev_h = prev.map(|tp| (tp * batch + b) * hs);
                        for j in 0..hs {
                            let k = b * hs + j;
                            let rg = gs[base + hs + j];
                            let hp = prev_h.map_or(T::zero(), |ph| h_all[ph + j]);
                            let dr = drh[k] * hp;
                            dp[base + hs + j] = dr * rg * (T::one() - rg);
                            acc[k] += drh[k] * rg;
                        }
                    }
                }
                if step > 0 {
                    let dzr = dpre.slice(s![rows.clone(), ..2 * hs]);
                    general_mat_mul(T::one(), &dzr, &u_zr, T::one(), &mut dhp);
                }
                dh_next.assign(&dhp);
            }
            if let Some(grads) = grads {
                let hprev = shifted_state(&cache.h, steps, batch, reverse);
                let mut g_zr = grads.w_recurrent.slice_mut(s![..2 * hs, ..]);
                general_mat_mul(T::one(), &dpre.slice(s![.., ..2 * hs]).t(), &hprev, T::one(), &mut g_zr);
                let mut g_n = grads.w_recurrent.slice_mut(s![2 * hs.., ..]);
                general_mat_mul(T::one(), &dpre.slice(s![.., 2 * hs..]).t(), &cache.aux, T::one(), &mut g_n);
            }
        }
    }
    dpre
}

impl<T: Scalar> RecurrentLayer<T> {
    pub fn hidden(&self) -> usize {
        self.directions[0].hidden()
    }

    pub fn input(&self) -> usize {
        self.directions[0].input()
    }

    pub fn output_width(&self) -> usize {
        match (self.directions.len(), self.merge) {
            (2, MergeMode::Concat) => 2 * self.hidden(),
            _ => self.hidden(),
        }
    }

    /// `x` is `steps·batch × D`. Returns `steps·batch × W` when returning
    /// sequences, else the final states `batch × W` (forward state after the
    /// last step, backward state after processing back to the first step).
    pub(crate) fn forward(&self, x: Array2<T>, steps: usize, batch: usize) -> Result<(Array2<T>, RecurrentCache<T>)> {
        if x.nrows() != steps * batch || x.ncols() != self.input() {
            return Err(Error::Shape(format!(
                "recurrent layer expects {}×{} input, got {:?}",
                steps * batch,
                self.input(),
                x.dim()
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        let dirs: Vec<DirectionCache<T>> = self
            .directions
            .iter()
            .enumerate()
            .map(|(d, p)| forward_direction(p, self.cell, &x, steps, batch, d == 1))
            .collect();
        let hs = self.hidden();
        let out = if self.return_sequences {
            match (dirs.len(), self.merge) {
                (1, _) => dirs[0].h.clone(),
                (_, MergeMode::Sum) => &dirs[0].h + &dirs[1].h,
                (_, MergeMode::Concat) => {
                    ndarray::concatenate(Axis(1), &[dirs[0].h.view(), dirs[1].h.view()]).expect("same rows")
                }
            }
        } else {
            let last = dirs[0].h.slice(s![(steps - 1) * batch.., ..]);
            match (dirs.len(), self.merge) {
                (1, _) => last.to_owned(),
                (_, merge) => {
                    let first = dirs[1].h.slice(s![..batch, ..]);
                    match merge {
                        MergeMode::Sum => &last + &first,
                        MergeMode::Concat => ndarray::concatenate(Axis(1), &[last, first]).expect("same rows"),
                    }
                }
            }
        };
        debug_assert_eq!(out.ncols(), if self.merge == MergeMode::Concat && dirs.len() == 2 { 2 * hs } else { hs });
        Ok((out, RecurrentCache { input: x, steps, batch, dirs }))
    }

    /// Backpropagates `d_out` (shaped like the forward output). Returns the
    /// input gradient when `need_input_grad`, and parameter gradients per
    /// direction when `need_param_grads`.
    pub(crate) fn backward(
        &self,
        cache: &RecurrentCache<T>,
        d_out: ArrayView2<T>,
        need_input_grad: bool,
        need_param_grads: bool,
    ) -> (Option<Array2<T>>, Option<Vec<CellParams<T>>>) {
        let (steps, batch) = (cache.steps, cache.batch);
        let hs = self.hidden();
        let n_dirs = self.directions.len();
        let mut dx = need_input_grad.then(|| Array2::<T>::zeros(cache.input.dim()));
        let mut all_grads = Vec::new();
        for (d, p) in self.directions.iter().enumerate() {
            let cols = match (n_dirs, self.merge) {
                (2, MergeMode::Concat) => d * hs..(d + 1) * hs,
                _ => 0..hs,
            };
            let mut dh = Array2::<T>::zeros((steps * batch, hs));
            if self.return_sequences {
                dh.assign(&d_out.slice(s![.., cols]));
            } else {
                let t = if d == 0 { steps - 1 } else { 0 };
                dh.slice_mut(s![t * batch..(t + 1) * batch, ..]).assign(&d_out.slice(s![.., cols]));
            }
            let mut grads = need_param_grads.then(|| CellParams::zeros(self.cell, p.input(), hs));
            let dpre = backward_direction(p, self.cell, &cache.dirs[d], steps, batch, d == 1, &dh, grads.as_mut());
            if let Some(g) = grads.as_mut() {
                general_mat_mul(T::one(), &dpre.t(), &cache.input, T::one(), &mut g.w_input);
                g.bias += &dpre.sum_axis(Axis(0));
            }
            if let Some(dx) = dx.as_mut() {
                general_mat_mul(T::one(), &dpre, &p.w_input, T::one(), dx);
            }
            if let Some(g) = grads {
                all_grads.push(g);
            }
        }
        (dx, need_param_grads.then_some(all_grads))
    }
}

/// Bidirectional (or unidirectional) pass over a single `T × D` sequence.
pub fn bidirectional_forward<T: Scalar>(layer: &RecurrentLayer<T>, sequence: ArrayView2<T>) -> Result<Array2<T>> {
    let steps = sequence.nrows();
    if steps == 0 {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    Ok(layer.forward(sequence.to_owned(), steps, 1)?.0)
}
