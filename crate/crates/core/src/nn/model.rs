//! Layer stacks: construction, training forward/backward passes and
//! inference.

use nalgebra::DMatrix;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand_distr::{Distribution, StandardNormal, Uniform};
use sha2::{Digest, Sha256};

use super::cell::{CellKind, CellParams};
use super::ops::{dropout_mask, mean_cross_entropy, softmax_rows};
use super::recurrent::{RecurrentCache, RecurrentLayer};
use super::scalar::Scalar;
use super::spec::{validate_layers, LayerKind, LayerSpec};
use crate::error::{Error, Result};
use crate::rng::{substream, Rng};

/// Samples evaluated together by [`RecurrentModel::predict_proba`].
const INFERENCE_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    /// `D_in × n_classes`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Recurrent(RecurrentLayer<T>),
    Dense(DenseLayer<T>),
    Dropout(f64),
    Softmax,
}

impl<T> Layer<T> {
    pub fn has_parameters(&self) -> bool {
        matches!(self, Layer::Recurrent(_) | Layer::Dense(_))
    }
}

/// Gradient of one named parameter block, flattened in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad<T> {
    pub layer: usize,
    pub name: String,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub loss: f64,
    pub entries: Vec<ParamGrad<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, name: &str) -> Option<&[T]> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.values.as_slice())
    }

    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| e.values.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }
}

/// A named parameter block.
pub struct ParamBlock<'a, T> {
    pub layer: usize,
    pub name: String,
    pub shape: Vec<usize>,
    pub values: &'a [T],
}

pub struct ParamBlockMut<'a, T> {
    pub layer: usize,
    pub name: String,
    pub values: &'a mut [T],
}

enum Cache<T> {
    Recurrent(RecurrentCache<T>),
    Dense(Array2<T>),
    Dropout(Option<Array2<T>>),
    Passthrough,
}

/// A sequence classifier built from [`LayerSpec`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentModel<T = f32> {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
    frozen: Vec<bool>,
    seed: u64,
}

fn direction_name(d: usize) -> &'static str {
    if d == 0 {
        "fwd"
    } else {
        "bwd"
    }
}

fn cell_kind(kind: LayerKind) -> CellKind {
    match kind {
        LayerKind::Lstm | LayerKind::BiLstm => CellKind::Lstm,
        _ => CellKind::Gru,
    }
}

fn glorot<T: Scalar>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Array2<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    Array2::from_shape_simple_fn((rows, cols), || T::of(dist.sample(rng)))
}

/// Orthogonal `n × n` matrix: Q of a Gaussian matrix with the signs of R's
/// diagonal folded in so the distribution is uniform.
fn orthogonal<T: Scalar>(n: usize, rng: &mut Rng) -> Array2<T> {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    Array2::from_shape_fn((n, n), |(i, j)| {
        let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        T::of(q[(i, j)] * sign)
    })
}

/// Builds a model with deterministic initialization: Glorot-uniform input and
/// dense weights, orthogonal recurrent blocks per gate, zero biases except an
/// LSTM forget bias of 1.
pub fn build_model<T: Scalar>(specs: &[LayerSpec], seed: u64) -> Result<RecurrentModel<T>> {
    validate_layers(specs)?;
    let mut layers = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let layer = match spec.kind {
            k if k.is_recurrent() => {
                let cell = cell_kind(k);
                let (d, h, g) = (spec.input_size, spec.output_size, cell.gates());
                let directions = (0..spec.directions())
                    .map(|dir| {
                        let mut rng = substream(seed, "init", &[i as u64, dir as u64]);
                        let w_input = glorot(g * h, d, d, g * h, &mut rng);
                        let mut w_recurrent = Array2::zeros((g * h, h));
                        for gate in 0..g {
                            w_recurrent
                                .slice_mut(ndarray::s![gate * h..(gate + 1) * h, ..])
                                .assign(&orthogonal::<T>(h, &mut rng));
                        }
                        let mut bias = Array1::zeros(g * h);
                        if cell == CellKind::Lstm {
                            bias.slice_mut(ndarray::s![h..2 * h]).fill(T::one());
                        }
                        CellParams { w_input, w_recurrent, bias }
                    })
                    .collect();
                Layer::Recurrent(RecurrentLayer {
                    cell,
                    merge: spec.merge_mode,
                    return_sequences: spec.return_sequences,
                    directions,
                })
            }
            LayerKind::Dense => {
                let mut rng = substream(seed, "init", &[i as u64, 0]);
                let (din, dout) = (spec.input_size, spec.output_size);
                Layer::Dense(DenseLayer {
                    weight: glorot(din, dout, din, dout, &mut rng),
                    bias: Array1::zeros(dout),
                })
            }
            LayerKind::Dropout => Layer::Dropout(spec.dropout_rate),
            _ => Layer::Softmax,
        };
        layers.push(layer);
    }
    Ok(RecurrentModel {
        specs: specs.to_vec(),
        frozen: vec![false; specs.len()],
        layers,
        seed,
    })
}

impl<T: Scalar> RecurrentModel<T> {
    /// Assembles a model from explicit layers, checking every block's shape
    /// against the specs.
    pub fn from_parts(specs: Vec<LayerSpec>, layers: Vec<Layer<T>>, frozen: Vec<bool>, seed: u64) -> Result<Self> {
        validate_layers(&specs)?;
        if layers.len() != specs.len() || frozen.len() != specs.len() {
            return Err(Error::Shape("layer, spec and freeze-flag counts differ".into()));
        }
        let reference = build_model::<T>(&specs, 0)?;
        for (i, (a, b)) in layers.iter().zip(&reference.layers).enumerate() {
            let ok = match (a, b) {
                (Layer::Recurrent(a), Layer::Recurrent(b)) => {
                    a.cell == b.cell
                        && a.merge == b.merge
                        && a.return_sequences == b.return_sequences
                        && a.directions.len() == b.directions.len()
                        && a.directions.iter().zip(&b.directions).all(|(p, q)| {
                            p.w_input.dim() == q.w_input.dim()
                                && p.w_recurrent.dim() == q.w_recurrent.dim()
                                && p.bias.dim() == q.bias.dim()
                        })
                }
                (Layer::Dense(a), Layer::Dense(b)) => a.weight.dim() == b.weight.dim() && a.bias.dim() == b.bias.dim(),
                (Layer::Dropout(a), Layer::Dropout(b)) => a == b,
                (Layer::Softmax, Layer::Softmax) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::Shape(format!("layer {i} parameters do not match its spec")));
            }
        }
        Ok(Self { specs, layers, frozen, seed })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_features(&self) -> usize {
        self.specs[0].input_size
    }

    pub fn n_classes(&self) -> usize {
        self.specs.last().map_or(0, |s| s.output_size)
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn is_frozen(&self, layer: usize) -> bool {
        self.frozen.get(layer).copied().unwrap_or(false)
    }

    pub fn set_frozen(&mut self, layer: usize, frozen: bool) -> Result<()> {
        let slot = self
            .frozen
            .get_mut(layer)
            .ok_or_else(|| Error::InvalidArgument(format!("no layer {layer}")))?;
        *slot = frozen;
        Ok(())
    }

    /// Freezes every recurrent layer and unfreezes the rest.
    pub fn freeze_recurrent(&mut self) {
        for (flag, spec) in self.frozen.iter_mut().zip(&self.specs) {
            *flag = spec.kind.is_recurrent();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.values.len()).sum()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.parameters()
            .iter()
            .filter(|p| !self.frozen[p.layer])
            .map(|p| p.values.len())
            .sum()
    }

    pub fn parameters(&self) -> Vec<ParamBlock<'_, T>> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Recurrent(r) => {
                    for (d, p) in r.directions.iter().enumerate() {
                        let dir = direction_name(d);
                        out.push(ParamBlock {
                            layer: i,
                            name: format!("layer{i}.{dir}.w_input"),
                            shape: p.w_input.shape().to_vec(),
                            values: p.w_input.as_slice().expect("standard layout"),
                        });
                        out.push(ParamBlock {
                            layer: i,
                            name: format!("layer{i}.{dir}.w_recurrent"),
                            shape: p.w_recurrent.shape().to_vec(),
                            values: p.w_recurrent.as_slice().expect("standard layout"),
                        });
                        out.push(ParamBlock {
                            layer: i,
                            name: format!("layer{i}.{dir}.bias"),
                            shape: p.bias.shape().to_vec(),
                            values: p.bias.as_slice().expect("standard layout"),
                        });
                    }
                }
                Layer::Dense(dl) => {
                    out.push(ParamBlock {
                        layer: i,
                        name: format!("layer{i}.weight"),
                        shape: dl.weight.shape().to_vec(),
                        values: dl.weight.as_slice().expect("standard layout"),
                    });
                    out.push(ParamBlock {
                        layer: i,
                        name: format!("layer{i}.bias"),
                        shape: dl.bias.shape().to_vec(),
                        values: dl.bias.as_slice().expect("standard layout"),
                    });
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<ParamBlockMut<'_, T>> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Recurrent(r) => {
                    for (d, p) in r.directions.iter_mut().enumerate() {
                        let dir = direction_name(d);
                        let CellParams { w_input, w_recurrent, bias } = p;
                        for (suffix, values) in [
                            ("w_input", w_input.as_slice_mut()),
                            ("w_recurrent", w_recurrent.as_slice_mut()),
                            ("bias", bias.as_slice_mut()),
                        ] {
                            out.push(ParamBlockMut {
                                layer: i,
                                name: format!("layer{i}.{dir}.{suffix}"),
                                values: values.expect("standard layout"),
                            });
                        }
                    }
                }
                Layer::Dense(dl) => {
                    let DenseLayer { weight, bias } = dl;
                    out.push(ParamBlockMut {
                        layer: i,
                        name: format!("layer{i}.weight"),
                        values: weight.as_slice_mut().expect("standard layout"),
                    });
                    out.push(ParamBlockMut {
                        layer: i,
                        name: format!("layer{i}.bias"),
                        values: bias.as_slice_mut().expect("standard layout"),
                    });
                }
                _ => {}
            }
        }
        out
    }

    /// SHA-256 over the recurrent layers' parameters (names, shapes and
    /// values as little-endian f64).
    pub fn recurrent_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for block in self.parameters() {
            if !self.specs[block.layer].kind.is_recurrent() {
                continue;
            }
            h.update(block.name.as_bytes());
            for d in &block.shape {
                h.update((*d as u64).to_le_bytes());
            }
            for v in block.values {
                h.update(v.as_f64().to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }

    /// Converts the parameters to another precision.
    pub fn cast<U: Scalar>(&self) -> RecurrentModel<U> {
        let m2 = |a: &Array2<T>| a.mapv(|v| U::of(v.as_f64()));
        let m1 = |a: &Array1<T>| a.mapv(|v| U::of(v.as_f64()));
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Recurrent(r) => Layer::Recurrent(RecurrentLayer {
                    cell: r.cell,
                    merge: r.merge,
                    return_sequences: r.return_sequences,
                    directions: r
                        .directions
                        .iter()
                        .map(|p| CellParams {
                            w_input: m2(&p.w_input),
                            w_recurrent: m2(&p.w_recurrent),
                            bias: m1(&p.bias),
                        })
                        .collect(),
                }),
                Layer::Dense(d) => Layer::Dense(DenseLayer {
                    weight: m2(&d.weight),
                    bias: m1(&d.bias),
                }),
                Layer::Dropout(r) => Layer::Dropout(*r),
                Layer::Softmax => Layer::Softmax,
            })
            .collect();
        RecurrentModel {
            specs: self.specs.clone(),
            layers,
            frozen: self.frozen.clone(),
            seed: self.seed,
        }
    }

    fn check_input(&self, x: &ArrayView3<T>) -> Result<()> {
        let (b, t, d) = x.dim();
        if b == 0 || t == 0 {
            return Err(Error::Shape(format!("empty input batch {:?}", x.dim())));
        }
        if d != self.n_features() {
            return Err(Error::Shape(format!(
                "model expects {} features per timestep, input has {d}",
                self.n_features()
            )));
        }
        Ok(())
    }

    fn to_time_major(&self, x: ArrayView3<T>) -> Result<(Array2<T>, usize, usize)> {
        self.check_input(&x)?;
        let (batch, steps, d) = x.dim();
        let a = x
            .permuted_axes([1, 0, 2])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((steps * batch, d))
            .expect("contiguous");
        Ok((a, steps, batch))
    }

    /// Runs layers `start..end` on `a`. With `dropout_rng`, dropout layers
    /// sample masks (training mode); otherwise they are identities.
    fn forward_range(
        &self,
        start: usize,
        end: usize,
        mut a: Array2<T>,
        steps: usize,
        batch: usize,
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<(Array2<T>, Vec<Cache<T>>)> {
        let mut caches = Vec::with_capacity(end - start);
        for layer in &self.layers[start..end] {
            match layer {
                Layer::Recurrent(r) => {
                    let (out, cache) = r.forward(a, steps, batch)?;
                    a = out;
                    caches.push(Cache::Recurrent(cache));
                }
                Layer::Dense(dl) => {
                    let mut z = Array2::zeros((a.nrows(), dl.weight.ncols()));
                    general_mat_mul(T::one(), &a, &dl.weight, T::zero(), &mut z);
                    z += &dl.bias;
                    caches.push(Cache::Dense(std::mem::replace(&mut a, z)));
                }
                Layer::Dropout(rate) => match dropout_rng.as_deref_mut() {
                    Some(rng) if *rate > 0.0 => {
                        let mask = dropout_mask::<T>(a.dim(), *rate, rng);
                        a *= &mask;
                        caches.push(Cache::Dropout(Some(mask)));
                    }
                    _ => caches.push(Cache::Dropout(None)),
                },
                Layer::Softmax => {
                    a = softmax_rows(a.view());
                    caches.push(Cache::Passthrough);
                }
            }
        }
        Ok((a, caches))
    }

    /// Index just past the last recurrent layer: the layers from here on
    /// act on one feature vector per sample.
    pub fn head_start(&self) -> usize {
        self.specs.iter().rposition(|s| s.kind.is_recurrent()).map_or(0, |i| i + 1)
    }

    /// Evaluation-mode output of the recurrent body, one row per sample.
    /// Feeding it to the `*_head` methods is equivalent to running the whole
    /// model with the body in evaluation mode.
    pub fn encode(&self, x: ArrayView3<T>) -> Result<Array2<T>> {
        let end = self.head_start();
        let mut out = Array2::zeros((x.len_of(Axis(0)), self.specs[end].input_size));
        let mut row = 0;
        for chunk in x.axis_chunks_iter(Axis(0), INFERENCE_CHUNK) {
            let (a, steps, batch) = self.to_time_major(chunk)?;
            let (z, _) = self.forward_range(0, end, a, steps, batch, None)?;
            out.slice_mut(ndarray::s![row..row + batch, ..]).assign(&z);
            row += batch;
        }
        Ok(out)
    }

    /// Class probabilities (`B × C`) in evaluation mode.
    pub fn predict_proba(&self, x: ArrayView3<T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        let mut out = Array2::zeros((x.len_of(Axis(0)), self.n_classes()));
        let mut row = 0;
        for chunk in x.axis_chunks_iter(Axis(0), INFERENCE_CHUNK) {
            let (a, steps, batch) = self.to_time_major(chunk)?;
            let (p, _) = self.forward_range(0, self.layers.len(), a, steps, batch, None)?;
            out.slice_mut(ndarray::s![row..row + batch, ..]).assign(&p);
            row += batch;
        }
        Ok(out)
    }

    /// Class probabilities from encoded body outputs (see [`Self::encode`]).
    pub fn predict_proba_head(&self, z: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_encoded(&z)?;
        let n = z.nrows();
        Ok(self.forward_range(self.head_start(), self.layers.len(), z.to_owned(), 1, n, None)?.0)
    }

    pub fn predict(&self, x: ArrayView3<T>) -> Result<Vec<usize>> {
        Ok(rows_argmax(&self.predict_proba(x)?))
    }

    pub fn predict_head(&self, z: ArrayView2<T>) -> Result<Vec<usize>> {
        Ok(rows_argmax(&self.predict_proba_head(z)?))
    }

    /// Mean cross-entropy on `x` in evaluation mode.
    pub fn loss(&self, x: ArrayView3<T>, labels: &[usize]) -> Result<f64> {
        let p = self.predict_proba(x)?;
        mean_cross_entropy(p.view(), labels)
    }

    fn check_encoded(&self, z: &ArrayView2<T>) -> Result<()> {
        let width = self.specs[self.head_start()].input_size;
        if z.ncols() != width || z.nrows() == 0 {
            return Err(Error::Shape(format!("head expects n × {width} encodings, got {:?}", z.dim())));
        }
        Ok(())
    }

    fn check_labels(&self, labels: &[usize], batch: usize) -> Result<()> {
        if labels.len() != batch {
            return Err(Error::Shape(format!("{batch} samples but {} labels", labels.len())));
        }
        let n_classes = self.n_classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::InvalidArgument(format!("label {bad} outside {n_classes} classes")));
        }
        Ok(())
    }

    /// Mean cross-entropy and its gradient w.r.t. every unfrozen parameter.
    /// Dropout is active when `dropout_rng` is given.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView3<T>,
        labels: &[usize],
        dropout_rng: Option<&mut Rng>,
    ) -> Result<Gradients<T>> {
        self.check_labels(labels, x.len_of(Axis(0)))?;
        let (a, steps, batch) = self.to_time_major(x)?;
        self.gradients_from(0, a, steps, batch, labels, dropout_rng)
    }

    /// Like [`Self::loss_and_gradients`] but starting from encoded body
    /// outputs; only head parameters receive gradients.
    pub fn loss_and_gradients_head(
        &self,
        z: ArrayView2<T>,
        labels: &[usize],
        dropout_rng: Option<&mut Rng>,
    ) -> Result<Gradients<T>> {
        self.check_encoded(&z)?;
        self.check_labels(labels, z.nrows())?;
        self.gradients_from(self.head_start(), z.to_owned(), 1, z.nrows(), labels, dropout_rng)
    }

    fn gradients_from(
        &self,
        start: usize,
        a: Array2<T>,
        steps: usize,
        batch: usize,
        labels: &[usize],
        dropout_rng: Option<&mut Rng>,
    ) -> Result<Gradients<T>> {
        let (probs, caches) = self.forward_range(start, self.layers.len(), a, steps, batch, dropout_rng)?;
        let loss = mean_cross_entropy(probs.view(), labels)?;

        // softmax + cross-entropy: d logits = (p − onehot) / B
        let mut delta = probs;
        for (b, &y) in labels.iter().enumerate() {
            delta[[b, y]] -= T::one();
        }
        delta.mapv_inplace(|v| v / T::of(batch as f64));

        let first_trainable =
            (start..self.layers.len()).find(|&i| self.layers[i].has_parameters() && !self.frozen[i]);
        let mut entries = Vec::new();
        let Some(first_trainable) = first_trainable else {
            return Ok(Gradients { loss, entries });
        };
        let last = self.layers.len() - 1;
        for i in (first_trainable..last).rev() {
            let need_input = i > first_trainable;
            match (&self.layers[i], &caches[i - start]) {
                (Layer::Dense(dl), Cache::Dense(input)) => {
                    if !self.frozen[i] {
                        let mut gw = Array2::zeros(dl.weight.dim());
                        general_mat_mul(T::one(), &input.t(), &delta, T::zero(), &mut gw);
                        let gb = delta.sum_axis(Axis(0));
                        entries.push(ParamGrad {
                            layer: i,
                            name: format!("layer{i}.bias"),
                            values: gb.to_vec(),
                        });
                        entries.push(ParamGrad {
                            layer: i,
                            name: format!("layer{i}.weight"),
                            values: gw.into_raw_vec_and_offset().0,
                        });
                    }
                    if need_input {
                        let mut dx = Array2::zeros(input.dim());
                        general_mat_mul(T::one(), &delta, &dl.weight.t(), T::zero(), &mut dx);
                        delta = dx;
                    }
                }
                (Layer::Dropout(_), Cache::Dropout(mask)) => {
                    if let Some(mask) = mask {
                        delta *= mask;
                    }
                }
                (Layer::Recurrent(r), Cache::Recurrent(cache)) => {
                    let trainable = !self.frozen[i];
                    let (dx, grads) = r.backward(cache, delta.view(), need_input, trainable);
                    if let Some(grads) = grads {
                        for (d, g) in grads.into_iter().enumerate().rev() {
                            let dir = direction_name(d);
                            entries.push(ParamGrad {
                                layer: i,
                                name: format!("layer{i}.{dir}.bias"),
                                values: g.bias.to_vec(),
                            });
                            entries.push(ParamGrad {
                                layer: i,
                                name: format!("layer{i}.{dir}.w_recurrent"),
                                values: g.w_recurrent.into_raw_vec_and_offset().0,
                            });
                            entries.push(ParamGrad {
                                layer: i,
                                name: format!("layer{i}.{dir}.w_input"),
                                values: g.w_input.into_raw_vec_and_offset().0,
                            });
                        }
                    }
                    match dx {
                        Some(dx) => delta = dx,
                        None => break,
                    }
                }
                _ => unreachable!("cache kinds follow layer kinds"),
            }
        }
        entries.reverse();
        Ok(Gradients { loss, entries })
    }
}

fn rows_argmax<T: Scalar>(p: &Array2<T>) -> Vec<usize> {
    p.rows().into_iter().map(|r| argmax(r.iter().copied())).collect()
}

pub(crate) fn argmax<T: PartialOrd>(values: impl Iterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.enumerate() {
        match &best {
            Some((_, b)) if !(v > *b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// Copies `B × T × D` f64 data into the model precision.
pub fn to_precision<T: Scalar>(x: ArrayView3<f64>) -> Array3<T> {
    x.mapv(T::of)
}
