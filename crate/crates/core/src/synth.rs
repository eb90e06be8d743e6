//! Deterministic paired overt/covert EEG generator.
//!
//! Each class owns a template: a carrier frequency, a slow envelope shape and
//! a spatial weight pattern. The covert envelope template is a mixture of
//! the overt one and an independent shape with sample correlation exactly
//! `cross_condition_rho`. A trial multiplies the class envelope by a slow
//! per-trial modulation shared by the overt and covert copy, adds a
//! condition-specific phase jitter and independent Gaussian noise; covert
//! amplitude is attenuated.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::parse_kv;
use crate::error::{Error, Result};
use crate::io::{sha256_hex, write_file};
use crate::rng::{substream, Rng};
use crate::signal::{Condition, EegRecording, EpochSet, Marker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub subject_id: String,
    pub n_classes: usize,
    pub trials_per_class: usize,
    pub n_channels: usize,
    pub sample_rate_hz: f64,
    pub epoch_seconds: f64,
    /// Correlation between the overt and covert class envelope templates.
    pub cross_condition_rho: f64,
    /// Peak amplitude of the overt class signal before spatial weighting.
    pub signal_amplitude: f64,
    pub noise_sigma: f64,
    pub covert_attenuation: f64,
    /// Relative depth of the class envelope templates.
    pub template_depth: f64,
    /// Relative depth of the per-trial slow modulation.
    pub trial_depth: f64,
    /// Share of each class envelope that is class-specific; the rest is a
    /// slow envelope common to all classes of the subject.
    pub envelope_specificity: f64,
    /// Bandwidth of the Gaussian-smoothed envelope noise.
    pub envelope_bandwidth_hz: f64,
    /// Scales how far the class spatial patterns depart from a common one.
    pub class_separation: f64,
    /// Per-trial random channel gain spread.
    pub trial_gain_jitter: f64,
    pub carrier_low_hz: f64,
    pub carrier_high_hz: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            subject_id: "synth01".into(),
            n_classes: 5,
            trials_per_class: 80,
            n_channels: 64,
            sample_rate_hz: 500.0,
            epoch_seconds: 2.0,
            cross_condition_rho: 0.8,
            signal_amplitude: 0.6,
            noise_sigma: 0.5,
            covert_attenuation: 0.6,
            template_depth: 0.6,
            trial_depth: 0.3,
            envelope_specificity: 0.3,
            envelope_bandwidth_hz: 2.0,
            class_separation: 0.2,
            trial_gain_jitter: 0.2,
            carrier_low_hz: 6.0,
            carrier_high_hz: 30.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn n_timesteps(&self) -> usize {
        (self.epoch_seconds * self.sample_rate_hz).round() as usize
    }

    pub fn n_trials(&self) -> usize {
        self.n_classes * self.trials_per_class
    }

    pub fn class_names(&self) -> Vec<String> {
        const COMMANDS: [&str; 5] = ["Left", "Right", "Up", "Pick", "Push"];
        if self.n_classes == COMMANDS.len() {
            COMMANDS.iter().map(|s| s.to_string()).collect()
        } else {
            (0..self.n_classes).map(|k| format!("class{k}")).collect()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_classes < 2 || self.trials_per_class == 0 || self.n_channels == 0 {
            return bad("synthetic data needs ≥ 2 classes, ≥ 1 trial per class and ≥ 1 channel".into());
        }
        if !(self.sample_rate_hz > 0.0) || self.n_timesteps() < 8 {
            return bad(format!("{} s at {} Hz is too short", self.epoch_seconds, self.sample_rate_hz));
        }
        if !(0.0..=1.0).contains(&self.cross_condition_rho) {
            return bad(format!("rho {} outside [0, 1]", self.cross_condition_rho));
        }
        if !(self.noise_sigma >= 0.0) || !(self.covert_attenuation > 0.0 && self.covert_attenuation <= 1.0) {
            return bad("noise must be ≥ 0 and covert attenuation in (0, 1]".into());
        }
        if !(self.carrier_low_hz > 0.0 && self.carrier_low_hz <= self.carrier_high_hz)
            || self.carrier_high_hz >= self.sample_rate_hz / 2.0
        {
            return bad(format!(
                "carrier range {}–{} Hz must lie below Nyquist {} Hz",
                self.carrier_low_hz,
                self.carrier_high_hz,
                self.sample_rate_hz / 2.0
            ));
        }
        if !(0.0..=1.0).contains(&self.envelope_specificity) {
            return bad(format!("envelope_specificity {} outside [0, 1]", self.envelope_specificity));
        }
        if !(self.envelope_bandwidth_hz > 0.0) {
            return bad("envelope bandwidth must be positive".into());
        }
        for (name, v) in [
            ("signal_amplitude", self.signal_amplitude),
            ("template_depth", self.template_depth),
            ("trial_depth", self.trial_depth),
            ("class_separation", self.class_separation),
            ("trial_gain_jitter", self.trial_gain_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative number"));
            }
        }
        Ok(())
    }

    /// Applies `key = value` settings (field names as keys).
    pub fn apply_kv(&mut self, text: &str, origin: &str) -> Result<()> {
        for (k, v) in parse_kv(text, origin)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("synth `{key}` = `{v}` is invalid")))
        }
        match key {
            "subject_id" => self.subject_id = value.to_string(),
            "n_classes" => self.n_classes = p(key, value)?,
            "trials_per_class" => self.trials_per_class = p(key, value)?,
            "n_channels" => self.n_channels = p(key, value)?,
            "sample_rate_hz" => self.sample_rate_hz = p(key, value)?,
            "epoch_seconds" => self.epoch_seconds = p(key, value)?,
            "cross_condition_rho" | "rho" => self.cross_condition_rho = p(key, value)?,
            "signal_amplitude" => self.signal_amplitude = p(key, value)?,
            "noise_sigma" => self.noise_sigma = p(key, value)?,
            "covert_attenuation" => self.covert_attenuation = p(key, value)?,
            "template_depth" => self.template_depth = p(key, value)?,
            "trial_depth" => self.trial_depth = p(key, value)?,
            "envelope_specificity" => self.envelope_specificity = p(key, value)?,
            "envelope_bandwidth_hz" => self.envelope_bandwidth_hz = p(key, value)?,
            "class_separation" => self.class_separation = p(key, value)?,
            "trial_gain_jitter" => self.trial_gain_jitter = p(key, value)?,
            "carrier_low_hz" => self.carrier_low_hz = p(key, value)?,
            "carrier_high_hz" => self.carrier_high_hz = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            _ => return Err(Error::Config(format!("unknown synth key `{key}`"))),
        }
        Ok(())
    }
}

/// Ground truth of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub carrier_hz: f64,
    pub overt_envelope: Vec<f64>,
    pub covert_envelope: Vec<f64>,
    pub channel_weights: Vec<f64>,
}

/// White noise smoothed by a Gaussian kernel whose frequency response has
/// standard deviation `bandwidth_hz`, standardized to zero mean and unit
/// sample variance.
pub fn smooth_noise(n: usize, sample_rate_hz: f64, bandwidth_hz: f64, rng: &mut Rng) -> Vec<f64> {
    let sigma = sample_rate_hz / (2.0 * PI * bandwidth_hz);
    let half = (4.0 * sigma).ceil() as usize;
    let kernel: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let d = i as f64 - half as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let white: Vec<f64> = (0..n + 2 * half).map(|_| StandardNormal.sample(rng)).collect();
    let smooth: Vec<f64> = (0..n)
        .map(|t| kernel.iter().zip(&white[t..]).map(|(k, w)| k * w).sum())
        .collect();
    standardize(smooth)
}

fn standardize(mut x: Vec<f64>) -> Vec<f64> {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
    for v in &mut x {
        *v = if sd > 0.0 { (*v - m) / sd } else { 0.0 };
    }
    x
}

/// `rho·a + sqrt(1−rho²)·b⊥` where `b⊥` is `b` made orthogonal to `a`;
/// for standardized `a` the result has sample correlation exactly `rho`.
fn correlated_mixture(a: &[f64], b: &[f64], rho: f64) -> Vec<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let perp = standardize(b.iter().zip(a).map(|(y, x)| y - dot / aa * x).collect());
    let c = (1.0 - rho * rho).max(0.0).sqrt();
    a.iter().zip(&perp).map(|(x, p)| rho * x + c * p).collect()
}

fn positive_envelope(z: &[f64], depth: f64) -> Vec<f64> {
    z.iter().map(|v| (1.0 + depth * v).max(0.05)).collect()
}

fn blend(common: &[f64], specific: &[f64], specificity: f64) -> Vec<f64> {
    let c = (1.0 - specificity * specificity).max(0.0).sqrt();
    standardize(common.iter().zip(specific).map(|(a, b)| c * a + specificity * b).collect())
}

pub fn class_templates(spec: &SynthSpec) -> Vec<ClassTemplate> {
    let t = spec.n_timesteps();
    let (fs, bw) = (spec.sample_rate_hz, spec.envelope_bandwidth_hz);
    let mut common = substream(spec.seed, "synth", &[u64::MAX]);
    let base: Vec<f64> = (0..spec.n_channels).map(|_| common.random_range(0.5..1.5)).collect();
    let shared_overt = smooth_noise(t, fs, bw, &mut common);
    let shared_other = smooth_noise(t, fs, bw, &mut common);
    (0..spec.n_classes)
        .map(|k| {
            let mut rng = substream(spec.seed, "synth", &[k as u64]);
            let span = spec.carrier_high_hz - spec.carrier_low_hz;
            let slot = if spec.n_classes > 1 { k as f64 / (spec.n_classes - 1) as f64 } else { 0.5 };
            let carrier_hz = spec.carrier_low_hz + span * slot;
            let z = blend(&shared_overt, &smooth_noise(t, fs, bw, &mut rng), spec.envelope_specificity);
            let v = blend(&shared_other, &smooth_noise(t, fs, bw, &mut rng), spec.envelope_specificity);
            let zc = correlated_mixture(&z, &v, spec.cross_condition_rho);
            let channel_weights = base
                .iter()
                .map(|b| (b + spec.class_separation * rng.random_range(-1.0..1.0)).max(0.05))
                .collect();
            ClassTemplate {
                carrier_hz,
                overt_envelope: positive_envelope(&z, spec.template_depth),
                covert_envelope: positive_envelope(&zc, spec.template_depth),
                channel_weights,
            }
        })
        .collect()
}

/// Overt and covert trial `i`, each `T × C`.
fn paired_trial(spec: &SynthSpec, templates: &[ClassTemplate], i: usize) -> (usize, Array2<f64>, Array2<f64>) {
    let (t_len, c_len) = (spec.n_timesteps(), spec.n_channels);
    let label = i % spec.n_classes;
    let tpl = &templates[label];
    let mut shared = substream(spec.seed, "synth-trial", &[i as u64]);
    let u = smooth_noise(t_len, spec.sample_rate_hz, spec.envelope_bandwidth_hz, &mut shared);
    let phase = shared.random_range(0.0..2.0 * PI);
    let jitter_scale = (1.0 - spec.cross_condition_rho * spec.cross_condition_rho).max(0.0).sqrt();

    let mut out = Vec::with_capacity(2);
    for cond in [Condition::Overt, Condition::Covert] {
        let mut rng = substream(spec.seed, "synth-noise", &[cond.code() as u64, i as u64]);
        let (amp, env) = match cond {
            Condition::Overt => (spec.signal_amplitude, &tpl.overt_envelope),
            Condition::Covert => (spec.signal_amplitude * spec.covert_attenuation, &tpl.covert_envelope),
        };
        let jitter = match cond {
            Condition::Overt => 0.0,
            Condition::Covert => {
                let g: f64 = StandardNormal.sample(&mut rng);
                jitter_scale * 0.5 * PI * g
            }
        };
        let gains: Vec<f64> = tpl
            .channel_weights
            .iter()
            .map(|w| {
                let g: f64 = StandardNormal.sample(&mut rng);
                w * (1.0 + spec.trial_gain_jitter * g).max(0.0)
            })
            .collect();
        let omega = 2.0 * PI * tpl.carrier_hz / spec.sample_rate_hz;
        let mut x = Array2::zeros((t_len, c_len));
        for t in 0..t_len {
            let a = amp * env[t] * (1.0 + spec.trial_depth * u[t]).max(0.0) * (omega * t as f64 + phase + jitter).cos();
            for (c, g) in gains.iter().enumerate() {
                let noise: f64 = if spec.noise_sigma > 0.0 { StandardNormal.sample(&mut rng) } else { 0.0 };
                x[[t, c]] = g * a + spec.noise_sigma * noise;
            }
        }
        out.push(x);
    }
    let covert = out.pop().expect("two conditions");
    let overt = out.pop().expect("two conditions");
    (label, overt, covert)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub spec: SynthSpec,
    pub templates: Vec<ClassTemplate>,
}

/// Generates paired overt and covert epoch sets. Trial `i` has label
/// `i mod n_classes`; every trial draws from its own substreams, so the
/// output does not depend on evaluation order. Samples are rounded to `f32`,
/// the storage precision of epoch files, so written sets read back exactly.
pub fn generate_paired(spec: &SynthSpec) -> Result<(EpochSet, EpochSet, SynthTruth)> {
    spec.validate()?;
    let templates = class_templates(spec);
    let (n, t, c) = (spec.n_trials(), spec.n_timesteps(), spec.n_channels);
    let trials: Vec<(usize, Array2<f64>, Array2<f64>)> =
        (0..n).into_par_iter().map(|i| paired_trial(spec, &templates, i)).collect();
    let mut overt = Array3::zeros((n, t, c));
    let mut covert = Array3::zeros((n, t, c));
    let mut labels = Vec::with_capacity(n);
    for (i, (label, o, cv)) in trials.into_iter().enumerate() {
        overt.index_axis_mut(Axis(0), i).assign(&o);
        covert.index_axis_mut(Axis(0), i).assign(&cv);
        labels.push(label);
    }
    let to_storage = |v: &mut f64| *v = f64::from(*v as f32);
    overt.map_inplace(to_storage);
    covert.map_inplace(to_storage);
    let names = spec.class_names();
    Ok((
        EpochSet::new(overt, labels.clone(), Condition::Overt, spec.sample_rate_hz, names.clone())?,
        EpochSet::new(covert, labels, Condition::Covert, spec.sample_rate_hz, names)?,
        SynthTruth { spec: spec.clone(), templates },
    ))
}

/// Lays epochs end to end as a continuous recording: each trial is preceded
/// by `gap_seconds` of noise and marked at its onset. A `line_hz` tone of
/// amplitude `line_amplitude` is added to every channel.
pub fn to_recording(epochs: &EpochSet, gap_seconds: f64, line_hz: f64, line_amplitude: f64, seed: u64) -> Result<EegRecording> {
    let fs = epochs.sample_rate_hz();
    let gap = (gap_seconds * fs).round() as usize;
    let (n, t, c) = epochs.data().dim();
    let total = n * (gap + t) + gap;
    let mut rng = substream(seed, "synth-recording", &[epochs.condition().code() as u64]);
    let mut data = Array2::<f64>::zeros((c, total));
    let noise_sd = 0.1;
    data.mapv_inplace(|_| {
        let g: f64 = StandardNormal.sample(&mut rng);
        noise_sd * g
    });
    let mut markers = Vec::with_capacity(n);
    for i in 0..n {
        let onset = gap + i * (gap + t);
        let trial = epochs.trial(i);
        let mut seg = data.slice_mut(s![.., onset..onset + t]);
        seg += &trial.t();
        markers.push(Marker { sample_index: onset, class_id: epochs.labels()[i] as u16 });
    }
    if line_amplitude != 0.0 {
        let line: Array1<f64> = Array1::from_shape_fn(total, |k| line_amplitude * (2.0 * PI * line_hz * k as f64 / fs).sin());
        for mut row in data.rows_mut() {
            row += &line;
        }
    }
    let labels = (0..c).map(|k| format!("Ch{}", k + 1)).collect();
    EegRecording::new(data, fs, labels, markers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub condition: String,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSubject {
    pub subject_id: String,
    pub class_names: Vec<String>,
    pub seed: u64,
    pub files: Vec<ManifestFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub subjects: Vec<ManifestSubject>,
    pub truth: Vec<SynthTruth>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes `<subject>_overt.epo` and `<subject>_covert.epo` per subject plus
/// `manifest.json` into `dir`.
pub fn write_manifest(datasets: &[(EpochSet, EpochSet, SynthTruth)], dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut subjects = Vec::new();
    let mut truth = Vec::new();
    for (overt, covert, t) in datasets {
        let mut files = Vec::new();
        for set in [overt, covert] {
            let name = format!("{}_{}.epo", t.spec.subject_id, set.condition().as_str());
            let bytes = set.to_bytes();
            write_file(&dir.join(&name), &bytes)?;
            files.push(ManifestFile {
                condition: set.condition().as_str().to_string(),
                file: name,
                sha256: sha256_hex(&bytes),
            });
        }
        subjects.push(ManifestSubject {
            subject_id: t.spec.subject_id.clone(),
            class_names: overt.class_names().to_vec(),
            seed: t.spec.seed,
            files,
        });
        truth.push(t.clone());
    }
    let manifest = Manifest { schema: 1, subjects, truth };
    let path = dir.join(MANIFEST_NAME);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Loads every epoch file listed in a manifest, checking content hashes.
pub fn load_manifest_epochs(path: &Path) -> Result<Vec<(String, EpochSet)>> {
    let manifest = read_manifest(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for s in &manifest.subjects {
        for f in &s.files {
            let p = dir.join(&f.file);
            let bytes = crate::io::read_file(&p)?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(Error::format(&p, "content hash differs from manifest"));
            }
            out.push((s.subject_id.clone(), EpochSet::from_bytes(&bytes, &p)?));
        }
    }
    Ok(out)
}
