use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Lstm,
    Gru,
    BiLstm,
    BiGru,
    Dense,
    Dropout,
    Softmax,
}

impl LayerKind {
    pub fn is_recurrent(self) -> bool {
        matches!(self, LayerKind::Lstm | LayerKind::Gru | LayerKind::BiLstm | LayerKind::BiGru)
    }

    pub fn is_bidirectional(self) -> bool {
        matches!(self, LayerKind::BiLstm | LayerKind::BiGru)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            LayerKind::Lstm => 0,
            LayerKind::Gru => 1,
            LayerKind::BiLstm => 2,
            LayerKind::BiGru => 3,
            LayerKind::Dense => 4,
            LayerKind::Dropout => 5,
            LayerKind::Softmax => 6,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => LayerKind::Lstm,
            1 => LayerKind::Gru,
            2 => LayerKind::BiLstm,
            3 => LayerKind::BiGru,
            4 => LayerKind::Dense,
            5 => LayerKind::Dropout,
            6 => LayerKind::Softmax,
            _ => return None,
        })
    }
}

/// How the two directions of a bidirectional layer are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    Concat,
    Sum,
}

/// One layer of a sequence classifier.
///
/// `output_size` is the per-direction hidden size for recurrent layers, the
/// output width for dense layers, and equals `input_size` for dropout and
/// softmax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub input_size: usize,
    pub output_size: usize,
    pub dropout_rate: f64,
    pub merge_mode: MergeMode,
    pub return_sequences: bool,
}

impl LayerSpec {
    fn recurrent(kind: LayerKind, input: usize, hidden: usize, return_sequences: bool) -> Self {
        Self {
            kind,
            input_size: input,
            output_size: hidden,
            dropout_rate: 0.0,
            merge_mode: MergeMode::Concat,
            return_sequences,
        }
    }

    pub fn lstm(input: usize, hidden: usize, return_sequences: bool) -> Self {
        Self::recurrent(LayerKind::Lstm, input, hidden, return_sequences)
    }

    pub fn gru(input: usize, hidden: usize, return_sequences: bool) -> Self {
        Self::recurrent(LayerKind::Gru, input, hidden, return_sequences)
    }

    pub fn bilstm(input: usize, hidden: usize, return_sequences: bool) -> Self {
        Self::recurrent(LayerKind::BiLstm, input, hidden, return_sequences)
    }

    pub fn bigru(input: usize, hidden: usize, return_sequences: bool) -> Self {
        Self::recurrent(LayerKind::BiGru, input, hidden, return_sequences)
    }

    pub fn with_merge(mut self, merge: MergeMode) -> Self {
        self.merge_mode = merge;
        self
    }

    pub fn dense(input: usize, output: usize) -> Self {
        Self {
            kind: LayerKind::Dense,
            input_size: input,
            output_size: output,
            dropout_rate: 0.0,
            merge_mode: MergeMode::Concat,
            return_sequences: false,
        }
    }

    pub fn dropout(width: usize, rate: f64) -> Self {
        Self {
            kind: LayerKind::Dropout,
            input_size: width,
            output_size: width,
            dropout_rate: rate,
            merge_mode: MergeMode::Concat,
            return_sequences: false,
        }
    }

    pub fn softmax(width: usize) -> Self {
        Self {
            kind: LayerKind::Softmax,
            input_size: width,
            output_size: width,
            dropout_rate: 0.0,
            merge_mode: MergeMode::Concat,
            return_sequences: false,
        }
    }

    /// Width of this layer's output features.
    pub fn output_width(&self) -> usize {
        match self.kind {
            LayerKind::BiLstm | LayerKind::BiGru if self.merge_mode == MergeMode::Concat => 2 * self.output_size,
            _ => self.output_size,
        }
    }

    /// Gate count of the recurrent cell (4 for LSTM, 3 for GRU).
    pub fn gates(&self) -> usize {
        match self.kind {
            LayerKind::Lstm | LayerKind::BiLstm => 4,
            LayerKind::Gru | LayerKind::BiGru => 3,
            _ => 0,
        }
    }

    pub fn directions(&self) -> usize {
        if self.kind.is_bidirectional() {
            2
        } else if self.kind.is_recurrent() {
            1
        } else {
            0
        }
    }

    /// Number of learnable scalars.
    pub fn parameter_count(&self) -> usize {
        match self.kind {
            k if k.is_recurrent() => {
                let (g, h, d) = (self.gates(), self.output_size, self.input_size);
                self.directions() * (g * h * d + g * h * h + g * h)
            }
            LayerKind::Dense => self.input_size * self.output_size + self.output_size,
            _ => 0,
        }
    }
}

/// Checks that adjacent layers fit together and the stack ends in a dense
/// layer followed by softmax.
pub fn validate_layers(layers: &[LayerSpec]) -> Result<()> {
    let err = |i: usize, msg: String| Err(Error::Shape(format!("layer {i}: {msg}")));
    if layers.len() < 3 {
        return Err(Error::Shape("a classifier needs recurrent, dense and softmax layers".into()));
    }
    let mut sequence = true;
    let mut width = layers[0].input_size;
    for (i, l) in layers.iter().enumerate() {
        if l.input_size == 0 || l.output_size == 0 {
            return err(i, "zero-sized layer".into());
        }
        if l.input_size != width {
            return err(i, format!("expects {} inputs but previous layer produces {width}", l.input_size));
        }
        match l.kind {
            k if k.is_recurrent() => {
                if !sequence {
                    return err(i, "recurrent layer after a layer that drops the time axis".into());
                }
                sequence = l.return_sequences;
            }
            LayerKind::Dense => {
                if sequence {
                    return err(i, "dense layer needs a final-state (non-sequence) input".into());
                }
            }
            LayerKind::Dropout => {
                if !(0.0..1.0).contains(&l.dropout_rate) {
                    return err(i, format!("dropout rate {} outside [0, 1)", l.dropout_rate));
                }
                if l.output_size != l.input_size {
                    return err(i, "dropout must keep its width".into());
                }
            }
            LayerKind::Softmax => {
                if i + 1 != layers.len() {
                    return err(i, "softmax must be the last layer".into());
                }
                if i == 0 || layers[i - 1].kind != LayerKind::Dense {
                    return err(i, "softmax must follow a dense layer".into());
                }
                if l.output_size != l.input_size {
                    return err(i, "softmax must keep its width".into());
                }
            }
            _ => unreachable!(),
        }
        width = l.output_width();
    }
    if layers.last().map(|l| l.kind) != Some(LayerKind::Softmax) {
        return Err(Error::Shape("last layer must be softmax".into()));
    }
    Ok(())
}

/// Recurrent classifier families compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Gru,
    BiLstm,
    BiGru,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Lstm, ModelKind::Gru, ModelKind::BiLstm, ModelKind::BiGru];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Gru => "gru",
            ModelKind::BiLstm => "bilstm",
            ModelKind::BiGru => "bigru",
        }
    }

    fn layer_kind(self) -> LayerKind {
        match self {
            ModelKind::Lstm => LayerKind::Lstm,
            ModelKind::Gru => LayerKind::Gru,
            ModelKind::BiLstm => LayerKind::BiLstm,
            ModelKind::BiGru => LayerKind::BiGru,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(ModelKind::Lstm),
            "gru" => Ok(ModelKind::Gru),
            "bilstm" => Ok(ModelKind::BiLstm),
            "bigru" => Ok(ModelKind::BiGru),
            other => Err(Error::Config(format!("unknown model {other:?} (lstm|gru|bilstm|bigru)"))),
        }
    }
}

/// Two stacked recurrent layers with dropout, a dense head and softmax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ModelKind,
    pub n_features: usize,
    pub n_classes: usize,
    pub hidden: [usize; 2],
    pub dropout: [f64; 2],
    /// Sum-merge the second bidirectional layer so the dense head sees
    /// `hidden[1]` features instead of `2 * hidden[1]`.
    pub sum_merge_head: bool,
}

impl Architecture {
    /// 128 features → BiLSTM 512 (dropout 0.3) → BiLSTM 256 (dropout 0.2) → dense 5 → softmax.
    pub fn reference_bilstm() -> Self {
        Self {
            kind: ModelKind::BiLstm,
            n_features: 128,
            n_classes: 5,
            hidden: [512, 256],
            dropout: [0.3, 0.2],
            sum_merge_head: false,
        }
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let kind = self.kind.layer_kind();
        let first = LayerSpec::recurrent(kind, self.n_features, self.hidden[0], true);
        let mut second = LayerSpec::recurrent(kind, first.output_width(), self.hidden[1], false);
        if self.sum_merge_head {
            second = second.with_merge(MergeMode::Sum);
        }
        vec![
            first,
            LayerSpec::dropout(first.output_width(), self.dropout[0]),
            second,
            LayerSpec::dropout(second.output_width(), self.dropout[1]),
            LayerSpec::dense(second.output_width(), self.n_classes),
            LayerSpec::softmax(self.n_classes),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_bilstm_shapes() {
        let layers = Architecture::reference_bilstm().layers();
        validate_layers(&layers).unwrap();
        // per direction: 4×128×512 input, 4×512×512 recurrent, 4×512 bias
        assert_eq!(layers[0].parameter_count(), 2 * (4 * 128 * 512 + 4 * 512 * 512 + 4 * 512));
        assert_eq!(layers[2].input_size, 1024);
        assert_eq!(layers[2].parameter_count(), 2 * (4 * 1024 * 256 + 4 * 256 * 256 + 4 * 256));
        assert_eq!(layers[4].input_size, 512);

        let literal = Architecture {
            sum_merge_head: true,
            ..Architecture::reference_bilstm()
        }
        .layers();
        validate_layers(&literal).unwrap();
        assert_eq!(literal[2].input_size, 1024);
        assert_eq!(literal[4].parameter_count(), 256 * 5 + 5);
    }

    #[test]
    fn mismatched_widths_are_rejected() {
        let layers = vec![
            LayerSpec::bilstm(8, 4, false),
            LayerSpec::dense(4, 3),
            LayerSpec::softmax(3),
        ];
        assert!(matches!(validate_layers(&layers), Err(Error::Shape(_))));
        let seq_into_dense = vec![
            LayerSpec::lstm(8, 4, true),
            LayerSpec::dense(4, 3),
            LayerSpec::softmax(3),
        ];
        assert!(validate_layers(&seq_into_dense).is_err());
    }
}
