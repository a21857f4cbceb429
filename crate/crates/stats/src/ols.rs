//! Ordinary least squares with an intercept, solved through a QR factorisation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::{f_upper_tail, student_t_quantile, student_t_two_tailed};
use crate::error::{check_finite, Result, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t: f64,
    pub p: f64,
    pub ci95: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub intercept: Coefficient,
    pub coefficients: Vec<Coefficient>,
    pub f: f64,
    pub df_model: usize,
    pub df_residual: usize,
    pub p: f64,
    pub r2: f64,
    pub adj_r2: f64,
    pub residuals: Vec<f64>,
}

/// Regress `y` on the named predictor columns plus an intercept.
pub fn ols_regress(predictors: &[(String, Vec<f64>)], y: &[f64]) -> Result<OlsFit> {
    let n = y.len();
    let k = predictors.len();
    if n <= k + 1 {
        return Err(StatsError::TooFewRows { have: n, need: k + 1 });
    }
    check_finite(y)?;
    for (_, col) in predictors {
        if col.len() != n {
            return Err(StatsError::LengthMismatch(n, col.len()));
        }
        check_finite(col)?;
    }
    let p = k + 1;
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { predictors[j - 1].1[i] });
    let yv = DVector::from_column_slice(y);

    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * max_diag.max(1.0)) {
        return Err(StatsError::RankDeficient);
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r.solve_upper_triangular(&qty).ok_or(StatsError::RankDeficient)?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(StatsError::RankDeficient)?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let fitted = &x * &beta;
    let residuals: Vec<f64> = (&yv - &fitted).iter().copied().collect();
    let sse: f64 = residuals.iter().map(|e| e * e).sum();
    let y_mean = yv.mean();
    let sst: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let df_residual = n - p;
    let sigma2 = sse / df_residual as f64;
    let r2 = if sst == 0.0 { 1.0 } else { 1.0 - sse / sst };
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df_residual as f64;
    let ssr = sst - sse;
    let f = if sse == 0.0 {
        f64::INFINITY
    } else {
        (ssr / k as f64) / sigma2
    };
    let crit = student_t_quantile(0.975, df_residual as f64);

    let coef = |j: usize, name: &str| {
        let estimate = beta[j];
        let std_error = (sigma2 * xtx_inv[(j, j)]).sqrt();
        let t = if std_error == 0.0 { f64::INFINITY.copysign(estimate) } else { estimate / std_error };
        Coefficient {
            name: name.to_string(),
            estimate,
            std_error,
            t,
            p: student_t_two_tailed(t, df_residual as f64),
            ci95: (estimate - crit * std_error, estimate + crit * std_error),
        }
    };
    Ok(OlsFit {
        intercept: coef(0, "(intercept)"),
        coefficients: predictors.iter().enumerate().map(|(j, (name, _))| coef(j + 1, name)).collect(),
        f,
        df_model: k,
        df_residual,
        p: if k == 0 { 1.0 } else { f_upper_tail(f, k as f64, df_residual as f64) },
        r2,
        adj_r2,
        residuals,
    })
}
