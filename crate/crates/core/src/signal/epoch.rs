use std::path::Path;

use ndarray::{Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_file, write_file, Reader, Writer};
use crate::signal::EegRecording;

/// Speech condition of a trial set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Overt,
    Covert,
}

impl Condition {
    pub fn code(self) -> u8 {
        match self {
            Condition::Overt => 0,
            Condition::Covert => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Condition::Overt),
            1 => Some(Condition::Covert),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Overt => "overt",
            Condition::Covert => "covert",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "overt" => Ok(Condition::Overt),
            "covert" => Ok(Condition::Covert),
            other => Err(Error::Config(format!("unknown condition {other:?} (overt|covert)"))),
        }
    }
}

/// Fixed-length labelled trials, `trials × timesteps × channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    data: Array3<f64>,
    labels: Vec<usize>,
    condition: Condition,
    sample_rate_hz: f64,
    class_names: Vec<String>,
}

impl EpochSet {
    pub fn new(
        data: Array3<f64>,
        labels: Vec<usize>,
        condition: Condition,
        sample_rate_hz: f64,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != data.dim().0 {
            return Err(Error::Shape(format!(
                "{} labels for {} trials",
                labels.len(),
                data.dim().0
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidArgument(format!(
                "label {l} but only {} class names",
                class_names.len()
            )));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!("sample rate {sample_rate_hz}")));
        }
        Ok(Self {
            data,
            labels,
            condition,
            sample_rate_hz,
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

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_trials(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_timesteps(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// One trial as `timesteps × channels`.
    pub fn trial(&self, i: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(ndarray::Axis(0), i)
    }

    // EPOC layout: magic, u32 version, u32 trials, u32 timesteps, u32 channels,
    // u8 condition, f64 sample rate, u32 class count + length-prefixed names,
    // u16 labels, f32 data trial-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, t, c) = self.data.dim();
        let mut w = Writer::default();
        w.bytes(b"EPOC");
        w.u32(1);
        w.u32(n as u32);
        w.u32(t as u32);
        w.u32(c as u32);
        w.u8(self.condition.code());
        w.f64(self.sample_rate_hz);
        w.u32(self.class_names.len() as u32);
        for name in &self.class_names {
            w.str(name);
        }
        for &l in &self.labels {
            w.u16(l as u16);
        }
        for &v in self.data.iter() {
            w.f32(v as f32);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        r.magic(b"EPOC")?;
        let version = r.u32()?;
        if version != 1 {
            return Err(r.err(format!("unsupported epoch file version {version}")));
        }
        let n = r.u32()? as usize;
        let t = r.u32()? as usize;
        let c = r.u32()? as usize;
        let condition = Condition::from_code(r.u8()?).ok_or_else(|| r.err("bad condition code"))?;
        let fs = r.f64()?;
        let n_classes = r.u32()? as usize;
        let class_names = (0..n_classes).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let labels = (0..n).map(|_| r.u16().map(usize::from)).collect::<Result<Vec<_>>>()?;
        let raw = r.f32_vec(n * t * c)?;
        r.finish()?;
        let data = Array3::from_shape_vec((n, t, c), raw)
            .map_err(|e| r.err(e.to_string()))?
            .mapv(f64::from);
        Self::new(data, labels, condition, fs, class_names).map_err(|e| r.err(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, path)
    }
}

/// Trial dropped during epoching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTrial {
    pub marker_index: usize,
    pub sample_index: usize,
    pub reason: String,
}

/// Emitted as JSON next to the epoch output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochingReport {
    pub n_markers: usize,
    pub n_epochs: usize,
    pub n_timesteps: usize,
    pub baseline_samples: usize,
    pub skipped: Vec<SkippedTrial>,
}

/// Cuts one epoch per marker and subtracts the per-channel mean of the
/// pre-stimulus window `[marker - baseline, marker)`.
///
/// Markers without a full baseline before them or a full epoch after them
/// are dropped and listed in the report.
pub fn epoch_and_baseline(
    recording: &EegRecording,
    epoch_seconds: f64,
    baseline_ms: f64,
    condition: Condition,
    class_names: &[String],
) -> Result<(EpochSet, EpochingReport)> {
    let fs = recording.sample_rate_hz();
    let n_timesteps = (epoch_seconds * fs).round();
    let baseline = (baseline_ms / 1000.0 * fs).round();
    if !(n_timesteps >= 1.0) || !(baseline >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epoch of {epoch_seconds} s with {baseline_ms} ms baseline is empty at {fs} Hz"
        )));
    }
    let (n_timesteps, baseline) = (n_timesteps as usize, baseline as usize);
    let n_channels = recording.n_channels();
    let n_samples = recording.n_samples();
    let raw = recording.data();

    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for (i, m) in recording.markers().iter().enumerate() {
        let onset = m.sample_index;
        let reason = if onset < baseline {
            Some(format!("needs {baseline} baseline samples before onset"))
        } else if onset + n_timesteps > n_samples {
            Some(format!("needs {n_timesteps} samples after onset"))
        } else if usize::from(m.class_id) >= class_names.len() {
            Some(format!("class id {} has no class name", m.class_id))
        } else {
            None
        };
        match reason {
            Some(reason) => skipped.push(SkippedTrial {
                marker_index: i,
                sample_index: onset,
                reason,
            }),
            None => kept.push(*m),
        }
    }

    let mut data = Array3::<f64>::zeros((kept.len(), n_timesteps, n_channels));
    for (trial, m) in kept.iter().enumerate() {
        let onset = m.sample_index;
        for ch in 0..n_channels {
            let row = raw.row(ch);
            let mean = row.slice(ndarray::s![onset - baseline..onset]).sum() / baseline as f64;
            for t in 0..n_timesteps {
                data[(trial, t, ch)] = row[onset + t] - mean;
            }
        }
    }
    let labels = kept.iter().map(|m| usize::from(m.class_id)).collect();
    let report = EpochingReport {
        n_markers: recording.markers().len(),
        n_epochs: kept.len(),
        n_timesteps,
        baseline_samples: baseline,
        skipped,
    };
    let set = EpochSet::new(data, labels, condition, fs, class_names.to_vec())?;
    Ok((set, report))
}
