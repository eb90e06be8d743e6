//! Flat `key = value` run configuration with defaults for every key.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::EnvFloor;
use crate::harness::TrainConfig;
use crate::nn::{AdamConfig, Architecture, ModelKind};
use crate::signal::{IcaSettings, PreprocessConfig};
use crate::transfer::TransferPlan;

const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("notch.enabled", "true"),
    ("notch.center_hz", "50"),
    ("notch.quality", "30"),
    ("bandpass.enabled", "true"),
    ("bandpass.order", "4"),
    ("bandpass.low_hz", "0.5"),
    ("bandpass.high_hz", "80"),
    ("ica.enabled", "true"),
    ("ica.components", "0"),
    ("ica.max_iter", "400"),
    ("ica.tol", "1e-6"),
    ("ica.frontal_channels", ""),
    ("ica.threshold", "0.7"),
    ("epoch.seconds", "2"),
    ("epoch.baseline_ms", "100"),
    ("class_names", "Left,Right,Up,Pick,Push"),
    ("features.env_floor_rel", "1e-12"),
    ("model.kind", "bilstm"),
    ("model.hidden1", "512"),
    ("model.hidden2", "256"),
    ("model.dropout1", "0.3"),
    ("model.dropout2", "0.2"),
    ("model.sum_merge_head", "false"),
    ("train.lr", "1e-4"),
    ("train.beta1", "0.9"),
    ("train.beta2", "0.999"),
    ("train.epsilon", "1e-8"),
    ("train.batch_size", "32"),
    ("train.max_epochs", "60"),
    ("train.patience", "10"),
    ("train.val_fraction", "0.1"),
    ("train.cv_folds", "5"),
    ("train.test_fraction", "0.2"),
    ("transfer.budgets", "0.15,0.2,0.25,0.3"),
    ("transfer.seeds", "5"),
    ("transfer.test_fraction", "0.2"),
    ("transfer.split_seed", "0"),
    ("transfer.reinit_head", "false"),
    ("transfer.max_epochs", "40"),
    ("transfer.scratch_baseline", "true"),
];

/// Effective configuration: defaults overlaid with file and command-line
/// settings. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        DEFAULTS.iter().map(|(k, _)| *k)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{pair}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (k, v) in parse_kv(&text, &path.display().to_string())? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key);
        raw.parse()
            .map_err(|_| Error::Config(format!("`{key}` = `{raw}` is not a valid {}", std::any::type_name::<T>())))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.get(key);
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Config(format!("`{key}` item `{s}` is invalid"))))
            .collect()
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }

    pub fn to_kv_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed")
    }

    pub fn class_names(&self) -> Vec<String> {
        self.get("class_names").split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    }

    pub fn env_floor(&self) -> Result<EnvFloor> {
        let rel: f64 = self.parse("features.env_floor_rel")?;
        if !(rel > 0.0 && rel < 1.0) {
            return Err(Error::Config(format!("features.env_floor_rel = {rel} outside (0, 1)")));
        }
        Ok(EnvFloor::RelativeToPeak(rel))
    }

    pub fn preprocess_config(&self) -> Result<PreprocessConfig> {
        let ica = self.parse::<bool>("ica.enabled")?.then(|| -> Result<IcaSettings> {
            Ok(IcaSettings {
                components: self.parse("ica.components")?,
                max_iter: self.parse("ica.max_iter")?,
                tol: self.parse("ica.tol")?,
                frontal_channels: self.list("ica.frontal_channels")?,
                threshold: self.parse("ica.threshold")?,
            })
        });
        Ok(PreprocessConfig {
            notch: if self.parse("notch.enabled")? {
                Some((self.parse("notch.center_hz")?, self.parse("notch.quality")?))
            } else {
                None
            },
            bandpass: if self.parse("bandpass.enabled")? {
                Some((
                    self.parse("bandpass.order")?,
                    self.parse("bandpass.low_hz")?,
                    self.parse("bandpass.high_hz")?,
                ))
            } else {
                None
            },
            ica: ica.transpose()?,
            epoch_seconds: self.parse("epoch.seconds")?,
            baseline_ms: self.parse("epoch.baseline_ms")?,
            class_names: self.class_names(),
            seed: self.seed()?,
        })
    }

    pub fn architecture(&self, n_features: usize, n_classes: usize) -> Result<Architecture> {
        let kind: ModelKind = self.parse("model.kind")?;
        let arch = Architecture {
            kind,
            n_features,
            n_classes,
            hidden: [self.parse("model.hidden1")?, self.parse("model.hidden2")?],
            dropout: [self.parse("model.dropout1")?, self.parse("model.dropout2")?],
            sum_merge_head: self.parse("model.sum_merge_head")?,
        };
        crate::nn::validate_layers(&arch.layers()).map_err(|e| Error::Config(e.to_string()))?;
        Ok(arch)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            adam: AdamConfig {
                learning_rate: self.parse("train.lr")?,
                beta1: self.parse("train.beta1")?,
                beta2: self.parse("train.beta2")?,
                epsilon: self.parse("train.epsilon")?,
            },
            batch_size: self.parse("train.batch_size")?,
            max_epochs: self.parse("train.max_epochs")?,
            patience: self.parse("train.patience")?,
            val_fraction: self.parse("train.val_fraction")?,
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn transfer_plan(&self) -> Result<TransferPlan> {
        let train = self.train_config()?;
        let n_seeds: u64 = self.parse("transfer.seeds")?;
        let base = self.seed()?;
        let plan = TransferPlan {
            budgets: self.list("transfer.budgets")?,
            test_fraction: self.parse("transfer.test_fraction")?,
            split_seed: self.parse("transfer.split_seed")?,
            reinit_head: self.parse("transfer.reinit_head")?,
            seeds: (0..n_seeds).map(|k| base + k).collect(),
            finetune: TrainConfig { max_epochs: self.parse("transfer.max_epochs")?, ..train },
            scratch: self.parse::<bool>("transfer.scratch_baseline")?.then_some(train),
        };
        plan.validate()?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let mut c = RunConfig::default();
        assert_eq!(c.parse::<f64>("train.lr").unwrap(), 1e-4);
        c.set_pair("train.lr = 0.01").unwrap();
        assert_eq!(c.train_config().unwrap().adam.learning_rate, 0.01);
        assert!(c.set_pair("train.lrr=1").is_err());
        assert!(c.set_pair("nonsense").is_err());
        c.set("train.batch_size", "abc").unwrap();
        assert!(c.train_config().is_err());
    }

    #[test]
    fn default_architecture_and_plan() {
        let c = RunConfig::default();
        assert_eq!(c.architecture(128, 5).unwrap(), Architecture::reference_bilstm());
        let plan = c.transfer_plan().unwrap();
        assert_eq!(plan.budgets, vec![0.15, 0.2, 0.25, 0.3]);
        assert_eq!(plan.seeds.len(), 5);
        assert_eq!(plan.finetune.max_epochs, 40);
        assert_eq!(c.class_names().len(), 5);
    }

    #[test]
    fn kv_text_round_trips() {
        let mut c = RunConfig::default();
        c.set("model.kind", "gru").unwrap();
        let mut d = RunConfig::default();
        for (k, v) in parse_kv(&c.to_kv_text(), "x").unwrap() {
            d.set(&k, &v).unwrap();
        }
        assert_eq!(c, d);
        assert!(parse_kv("a b", "x").is_err());
    }
}
