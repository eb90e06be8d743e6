use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::io::{read_file, write_file, Reader, Writer};

const MAGIC: &[u8; 4] = b"EEGR";
const VERSION: u32 = 1;

/// Stimulus marker: onset sample and class id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Marker {
    pub sample_index: usize,
    pub class_id: u16,
}

/// Continuous multichannel recording, `channels × samples`, in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct EegRecording {
    data: Array2<f64>,
    sample_rate_hz: f64,
    channel_labels: Vec<String>,
    markers: Vec<Marker>,
}

impl EegRecording {
    pub fn new(
        data: Array2<f64>,
        sample_rate_hz: f64,
        channel_labels: Vec<String>,
        markers: Vec<Marker>,
    ) -> Result<Self> {
        let (n_channels, n_samples) = data.dim();
        if n_channels == 0 || n_samples == 0 {
            return Err(Error::InvalidArgument(format!(
                "recording must have at least one channel and one sample, got {n_channels}×{n_samples}"
            )));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if channel_labels.len() != n_channels {
            return Err(Error::Shape(format!(
                "{} channel labels for {n_channels} channels",
                channel_labels.len()
            )));
        }
        if let Some(m) = markers.iter().find(|m| m.sample_index >= n_samples) {
            return Err(Error::InvalidArgument(format!(
                "marker at sample {} outside recording of {n_samples} samples",
                m.sample_index
            )));
        }
        Ok(Self {
            data,
            sample_rate_hz,
            channel_labels,
            markers,
        })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    /// Same metadata, new samples (e.g. after filtering or ICA cleaning).
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        if data.dim() != self.data.dim() {
            return Err(Error::Shape(format!(
                "replacement data {:?} differs from {:?}",
                data.dim(),
                self.data.dim()
            )));
        }
        Ok(Self {
            data,
            ..self.clone()
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u32(self.n_channels() as u32);
        w.u64(self.n_samples() as u64);
        w.f64(self.sample_rate_hz);
        for label in &self.channel_labels {
            w.str(label);
        }
        w.u64(self.markers.len() as u64);
        for m in &self.markers {
            w.u64(m.sample_index as u64);
            w.u16(m.class_id);
        }
        for row in self.data.rows() {
            for &v in row {
                w.f32(v as f32);
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.err(format!("unsupported recording version {version}")));
        }
        let n_channels = r.u32()? as usize;
        let n_samples = r.u64()? as usize;
        let sample_rate = r.f64()?;
        let labels = (0..n_channels)
            .map(|_| r.str())
            .collect::<Result<Vec<_>>>()?;
        let n_markers = r.u64()? as usize;
        let mut markers = Vec::with_capacity(n_markers.min(1 << 20));
        for _ in 0..n_markers {
            let sample_index = r.u64()? as usize;
            let class_id = r.u16()?;
            markers.push(Marker {
                sample_index,
                class_id,
            });
        }
        let total = n_channels
            .checked_mul(n_samples)
            .ok_or_else(|| r.err("size overflow"))?;
        let raw = r.f32_vec(total)?;
        r.finish()?;
        let data = Array2::from_shape_vec((n_channels, n_samples), raw)
            .map_err(|e| r.err(e.to_string()))?
            .mapv(f64::from);
        Self::new(data, sample_rate, labels, markers).map_err(|e| r.err(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EegRecording {
        let data = Array2::from_shape_fn((2, 5), |(c, s)| (c * 10 + s) as f64 * 0.5);
        EegRecording::new(
            data,
            500.0,
            vec!["Fp1".into(), "Cz".into()],
            vec![Marker {
                sample_index: 3,
                class_id: 4,
            }],
        )
        .unwrap()
    }

    #[test]
    fn rejects_out_of_range_marker() {
        let err = EegRecording::new(
            Array2::zeros((1, 4)),
            500.0,
            vec!["a".into()],
            vec![Marker {
                sample_index: 4,
                class_id: 0,
            }],
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn binary_round_trip() {
        let rec = small();
        let bytes = rec.to_bytes();
        assert_eq!(&bytes[..4], b"EEGR");
        let back = EegRecording::from_bytes(&bytes, Path::new("x.eegr")).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let bytes = small().to_bytes();
        let err = EegRecording::from_bytes(&bytes[..bytes.len() - 2], Path::new("t.eegr"))
            .unwrap_err();
        assert!(err.to_string().contains("t.eegr"));
    }
}
