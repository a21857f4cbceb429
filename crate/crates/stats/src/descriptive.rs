//! Moments and summary statistics.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, require_len, Result, StatsError};

/// A labelled vector of finite observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub label: String,
    values: Vec<f64>,
}

impl Sample {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self { label: label.into(), values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptives {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
    /// Adjusted Fisher-Pearson skewness `G1`; needs n >= 3.
    pub skewness: Option<f64>,
    /// Raw Pearson kurtosis `m4 / m2^2` (normal = 3); needs n >= 4.
    pub kurtosis: Option<f64>,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with the n - 1 denominator.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}

pub fn std_dev(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

/// Mean, SD, skewness and kurtosis. A constant sample is rejected because
/// both shape statistics are undefined for it.
pub fn descriptives(values: &[f64]) -> Result<Descriptives> {
    check_finite(values)?;
    require_len(values, 2)?;
    let n = values.len();
    let nf = n as f64;
    let m = mean(values);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if values.iter().all(|v| *v == values[0]) {
        return Err(StatsError::ConstantInput);
    }
    let sd = (m2 * nf / (nf - 1.0)).sqrt();
    let skewness = (n >= 3).then(|| {
        let g1 = m3 / m2.powf(1.5);
        g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0)
    });
    let kurtosis = (n >= 4).then(|| m4 / (m2 * m2));
    Ok(Descriptives { n, mean: m, sd, skewness, kurtosis })
}
