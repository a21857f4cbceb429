//! Pearson and Spearman correlation with t-approximation p-values.

use serde::{Deserialize, Serialize};

use crate::descriptive::mean;
use crate::dist::student_t_two_tailed;
use crate::error::{check_finite, Result, StatsError};
use crate::rank::average_ranks;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewValues { have: x.len(), need: 3 });
    }
    check_finite(x)?;
    check_finite(y)
}

/// Plain product-moment coefficient; `None` if either input is constant.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Option<f64> {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-tailed p for `r` with `n - 2` degrees of freedom.
pub fn correlation_p(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = n as f64 - 2.0;
    let t = r * (df / (1.0 - r * r)).sqrt();
    student_t_two_tailed(t, df)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_pair(x, y)?;
    let r = pearson_r(x, y).ok_or(StatsError::ConstantInput)?;
    Ok(Correlation { r, p: correlation_p(r, x.len()), n: x.len() })
}

/// Spearman's rho as the Pearson correlation of tie-averaged ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_pair(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let r = pearson_r(&rx, &ry).ok_or(StatsError::ConstantInput)?;
    Ok(Correlation { r, p: correlation_p(r, x.len()), n: x.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// Row-major `labels.len()` squared entries.
    pub cells: Vec<Vec<Correlation>>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Correlation {
        self.cells[i][j]
    }
}

/// Symmetric Pearson matrix over named columns of equal length.
pub fn pearson_matrix(columns: &[(String, Vec<f64>)]) -> Result<CorrelationMatrix> {
    let n = columns.first().map_or(0, |c| c.1.len());
    for (name, col) in columns {
        if col.len() != n {
            return Err(StatsError::LengthMismatch(n, col.len()));
        }
        check_finite(col)?;
        if col.iter().all(|v| *v == col[0]) {
            return Err(StatsError::ConstantColumn(name.clone()));
        }
    }
    if n < 3 {
        return Err(StatsError::TooFewValues { have: n, need: 3 });
    }
    let k = columns.len();
    let unit = Correlation { r: 1.0, p: 0.0, n };
    let mut cells = vec![vec![unit; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let c = pearson(&columns[i].1, &columns[j].1)?;
            cells[i][j] = c;
            cells[j][i] = c;
        }
    }
    Ok(CorrelationMatrix { labels: columns.iter().map(|c| c.0.clone()).collect(), cells })
}
