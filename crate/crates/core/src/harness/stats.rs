//! Summary statistics, paired t-tests and Bonferroni correction.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two
/// values.
pub fn stdev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Two-sided tail probability `P(|T| ≥ |t|)` of Student's t with `df`
/// degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidArgument(format!("Student t with {df} degrees of freedom: {e}")))?;
    Ok((2.0 * dist.cdf(-t.abs())).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    /// `None` when the differences have zero variance and nonzero mean
    /// (the statistic is infinite).
    pub t: Option<f64>,
    pub df: usize,
    pub p: f64,
    pub mean_difference: f64,
}

/// Paired two-sided t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("paired samples of lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("a paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite paired difference".into()));
    }
    let n = d.len();
    let df = n - 1;
    let md = mean(&d);
    let sd = stdev(&d);
    if sd == 0.0 {
        return Ok(if md == 0.0 {
            TTest { t: Some(0.0), df, p: 1.0, mean_difference: 0.0 }
        } else {
            TTest { t: None, df, p: 0.0, mean_difference: md }
        });
    }
    let t = md / (sd / (n as f64).sqrt());
    Ok(TTest { t: Some(t), df, p: student_t_two_sided(t, df as f64)?, mean_difference: md })
}

/// `min(1, m·p)` for each p-value.
pub fn bonferroni(p_values: &[f64], m: usize) -> Vec<f64> {
    p_values.iter().map(|p| (p * m as f64).min(1.0)).collect()
}
