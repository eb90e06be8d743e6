//! Recurrent sequence classifiers trained with backpropagation through time.

mod adam;
mod cell;
mod checkpoint;
mod model;
mod ops;
mod recurrent;
mod scalar;
mod spec;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use cell::{gru_step, lstm_step, CellKind, CellParams};
pub use checkpoint::{load_model, model_from_bytes, model_to_bytes, save_model};
pub use model::{build_model, to_precision, DenseLayer, Gradients, Layer, ParamBlock, ParamBlockMut, ParamGrad, RecurrentModel};
pub(crate) use model::argmax;
pub use ops::{cross_entropy, dense_softmax_forward, dropout_apply, mean_cross_entropy, softmax_rows, DropoutMode, PROB_CLAMP};
pub use recurrent::{bidirectional_forward, RecurrentLayer};
pub use scalar::Scalar;
pub use spec::{validate_layers, Architecture, LayerKind, LayerSpec, MergeMode, ModelKind};

#[cfg(test)]
mod tests;
