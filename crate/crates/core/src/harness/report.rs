//! Versioned JSON experiment reports and their CSV renderings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cv::{CvResult, HoldoutResult};
use super::stats::{bonferroni, TTest};
use crate::error::{Error, Result};
use crate::io::{read_file, write_file, ArtifactHash};
use crate::transfer::TransferSweep;

pub const REPORT_SCHEMA: u32 = 1;

/// Results of one model family on one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub subject: String,
    pub model: String,
    pub seed: u64,
    pub cv: Option<CvResult>,
    pub holdout: Option<HoldoutResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRecord {
    pub family: String,
    pub a: String,
    pub b: String,
    pub t: Option<f64>,
    pub df: usize,
    pub p: f64,
    pub p_corrected: f64,
    /// Bonferroni family size.
    pub m: usize,
}

/// Corrects every test of a family with `m` = family size.
pub fn correct_family(family: &str, tests: Vec<(String, String, TTest)>) -> Vec<TTestRecord> {
    let m = tests.len();
    let corrected = bonferroni(&tests.iter().map(|t| t.2.p).collect::<Vec<_>>(), m);
    tests
        .into_iter()
        .zip(corrected)
        .map(|((a, b, t), p_corrected)| TTestRecord {
            family: family.to_string(),
            a,
            b,
            t: t.t,
            df: t.df,
            p: t.p,
            p_corrected,
            m,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub command: String,
    /// Unix seconds; the only field allowed to differ between reruns.
    pub generated_at: u64,
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<ArtifactHash>,
    pub results: Vec<ModelResult>,
    pub t_tests: Vec<TTestRecord>,
    pub transfer: Option<TransferSweep>,
}

impl ExperimentReport {
    pub fn new(command: &str, config: BTreeMap<String, String>, seeds: Vec<u64>, inputs: Vec<ArtifactHash>) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            command: command.to_string(),
            generated_at: 0,
            config,
            seeds,
            inputs,
            results: Vec::new(),
            t_tests: Vec::new(),
            transfer: None,
        }
    }

    pub fn stamp_now(&mut self) {
        self.generated_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let report: Self = serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
        if report.schema != REPORT_SCHEMA {
            return Err(Error::format(path, format!("unsupported report schema {}", report.schema)));
        }
        Ok(report)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "report is not UTF-8"))?;
        Self::from_json(&text, path)
    }

    /// Mean CV accuracy (percent) with subjects as rows and model families
    /// as columns; hold-out accuracy is used where no CV ran.
    pub fn accuracy_table_csv(&self) -> Result<String> {
        let mut models: Vec<&str> = Vec::new();
        let mut cells: BTreeMap<(&str, &str), f64> = BTreeMap::new();
        for r in &self.results {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
            let acc = match (&r.cv, &r.holdout) {
                (Some(cv), _) => cv.mean_accuracy,
                (None, Some(h)) => h.accuracy,
                (None, None) => continue,
            };
            cells.insert((r.subject.as_str(), r.model.as_str()), 100.0 * acc);
        }
        let mut subjects: Vec<&str> = self.results.iter().map(|r| r.subject.as_str()).collect();
        subjects.dedup();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["subject".to_string()];
        header.extend(models.iter().map(|m| m.to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for s in subjects {
            let mut row = vec![s.to_string()];
            for m in &models {
                row.push(cells.get(&(s, *m)).map_or(String::new(), |v| format!("{v:.2}")));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        finish_csv(w)
    }

    /// Per-budget transfer and from-scratch accuracy (percent).
    pub fn budget_csv(&self) -> Result<Option<String>> {
        let Some(sweep) = &self.transfer else {
            return Ok(None);
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["budget", "n_finetune", "transfer_mean", "transfer_stdev", "scratch_mean", "scratch_stdev", "runs"])
            .map_err(csv_err)?;
        for b in &sweep.budgets {
            let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{:.2}", 100.0 * v));
            w.write_record([
                format!("{}", b.budget),
                b.n_finetune.to_string(),
                fmt(Some(b.transfer_mean)),
                fmt(Some(b.transfer_stdev)),
                fmt(b.scratch_mean),
                fmt(b.scratch_stdev),
                b.transfer_accuracies.len().to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w).map(Some)
    }

    pub fn t_test_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["family", "a", "b", "t", "df", "p", "p_corrected", "m"]).map_err(csv_err)?;
        for t in &self.t_tests {
            w.write_record([
                t.family.clone(),
                t.a.clone(),
                t.b.clone(),
                t.t.map_or("inf".into(), |v| format!("{v}")),
                t.df.to_string(),
                format!("{}", t.p),
                format!("{}", t.p_corrected),
                t.m.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::ConfusionMatrix;
    use crate::harness::stats::paired_t_test;

    #[test]
    fn family_correction_uses_family_size() {
        let t1 = paired_t_test(&[1.0, 2.0, 3.5], &[0.0, 0.5, 1.0]).unwrap();
        let t2 = paired_t_test(&[1.0, 2.0, 3.0], &[1.5, 1.0, 3.0]).unwrap();
        let recs = correct_family("f", vec![("a".into(), "b".into(), t1), ("c".into(), "d".into(), t2)]);
        assert_eq!(recs[0].m, 2);
        assert_eq!(recs[0].p_corrected, (2.0 * t1.p).min(1.0));
        assert_eq!(recs[1].p_corrected, (2.0 * t2.p).min(1.0));
    }

    #[test]
    fn json_round_trip_and_table() {
        let mut r = ExperimentReport::new("train", BTreeMap::from([("k".into(), "v".into())]), vec![1], vec![]);
        let confusion = ConfusionMatrix::from_predictions(2, &[0, 1, 1], &[0, 1, 0]).unwrap();
        r.results.push(ModelResult {
            subject: "s01".into(),
            model: "bilstm".into(),
            seed: 1,
            cv: None,
            holdout: Some(HoldoutResult {
                test_fraction: 0.2,
                n_train: 12,
                n_test: 3,
                accuracy: confusion.accuracy(),
                confusion,
                fit: crate::harness::FitOutcome {
                    epochs_run: 1,
                    best_epoch: 1,
                    stopped_early: false,
                    history: vec![],
                },
            }),
        });
        let path = Path::new("r.json");
        let json = r.to_json().unwrap();
        let back = ExperimentReport::from_json(&json, path).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json().unwrap(), json);
        assert_eq!(r.accuracy_table_csv().unwrap(), "subject,bilstm\ns01,66.67\n");
        let bad = json.replace("\"schema\": 1", "\"schema\": 9");
        assert!(ExperimentReport::from_json(&bad, path).is_err());
    }
}
