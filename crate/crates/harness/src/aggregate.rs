//! Across-seed aggregation: mean curves with Student-t bands, and a one-sided
//! Welch test for comparing two groups of seeds.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AggregateError {
    #[error("no runs to aggregate")]
    Empty,
    #[error("run {run} has {len} points, expected {expected}")]
    LengthMismatch { run: usize, len: usize, expected: usize },
    #[error("confidence {0} outside (0, 1)")]
    Confidence(f64),
}

/// Mean and symmetric t-interval at one curve index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub n: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Band {
    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two samples.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn t_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom").inverse_cdf(p)
}

/// `mean ± t_{(1+c)/2, n-1} s / √n`. A single sample gives a zero-width band.
pub fn mean_band(samples: &[f64], confidence: f64) -> Result<Band, AggregateError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(AggregateError::Confidence(confidence));
    }
    if samples.is_empty() {
        return Err(AggregateError::Empty);
    }
    let n = samples.len();
    let m = mean(samples);
    let var = sample_variance(samples);
    let half = if n < 2 || var == 0.0 {
        0.0
    } else {
        t_quantile((1.0 + confidence) / 2.0, (n - 1) as f64) * (var / n as f64).sqrt()
    };
    Ok(Band { n, mean: m, ci_low: m - half, ci_high: m + half })
}

/// Per-index bands over equally long per-seed curves.
pub fn aggregate_runs(runs: &[Vec<f64>], confidence: f64) -> Result<Vec<Band>, AggregateError> {
    let first = runs.first().ok_or(AggregateError::Empty)?;
    for (run, r) in runs.iter().enumerate() {
        if r.len() != first.len() {
            return Err(AggregateError::LengthMismatch { run, len: r.len(), expected: first.len() });
        }
    }
    let mut column = Vec::with_capacity(runs.len());
    (0..first.len())
        .map(|i| {
            column.clear();
            column.extend(runs.iter().map(|r| r[i]));
            mean_band(&column, confidence)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchTest {
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub df: f64,
    /// `P(T ≥ t)` under equal means.
    pub p_value: f64,
}

/// One-sided Welch t-test of `mean(a) > mean(b)`.
pub fn welch_greater(a: &[f64], b: &[f64]) -> Result<WelchTest, AggregateError> {
    if a.is_empty() || b.is_empty() {
        return Err(AggregateError::Empty);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        let p = if ma > mb {
            0.0
        } else if ma < mb {
            1.0
        } else {
            0.5
        };
        let t = if ma == mb { 0.0 } else { (ma - mb).signum() * f64::INFINITY };
        return Ok(WelchTest { mean_a: ma, mean_b: mb, t, df: f64::NAN, p_value: p });
    }
    let t = (ma - mb) / se2.sqrt();
    let mut denom = 0.0;
    if na > 1.0 {
        denom += va * va / (na - 1.0);
    }
    if nb > 1.0 {
        denom += vb * vb / (nb - 1.0);
    }
    let df = se2 * se2 / denom;
    let p = 1.0 - StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom").cdf(t);
    Ok(WelchTest { mean_a: ma, mean_b: mb, t, df, p_value: p })
}
