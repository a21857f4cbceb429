//! One-way ANOVA and the paired-samples t-test.

use serde::{Deserialize, Serialize};

use crate::correlation::pearson_r;
use crate::descriptive::{mean, variance};
use crate::dist::{f_upper_tail, student_t_two_tailed};
use crate::error::{check_finite, Result, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    /// Set when the within-group variance is zero: `f` is infinite and `p` is 0.
    pub degenerate: bool,
}

pub fn anova_oneway(groups: &[&[f64]]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(StatsError::InvalidArgument("ANOVA needs at least two groups".into()));
    }
    for g in groups {
        if g.len() < 2 {
            return Err(StatsError::TooFewValues { have: g.len(), need: 2 });
        }
        check_finite(g)?;
    }
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    if ss_within == 0.0 {
        if ss_between == 0.0 {
            return Err(StatsError::ConstantInput);
        }
        return Ok(Anova {
            f: f64::INFINITY,
            df_between,
            df_within,
            p: 0.0,
            ss_between,
            ss_within,
            degenerate: true,
        });
    }
    let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
    Ok(Anova {
        f,
        df_between,
        df_within,
        p: f_upper_tail(f, df_between as f64, df_within as f64),
        ss_between,
        ss_within,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedT {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub mean_difference: f64,
    /// Correlation between the two paired series; `None` if either is constant.
    pub pearson_r: Option<f64>,
}

/// Paired t-test on `a - b`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<PairedT> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooFewValues { have: a.len(), need: 2 });
    }
    check_finite(a)?;
    check_finite(b)?;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().all(|d| *d == diffs[0]) {
        return Err(StatsError::ZeroVarianceDifferences);
    }
    let n = diffs.len() as f64;
    let md = mean(&diffs);
    let se = (variance(&diffs) / n).sqrt();
    let t = md / se;
    let df = diffs.len() - 1;
    Ok(PairedT { t, df, p: student_t_two_tailed(t, df as f64), mean_difference: md, pearson_r: pearson_r(a, b) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_groups_give_zero_f() {
        let g = [1.0, 2.0, 3.0];
        let r = anova_oneway(&[&g, &g, &g]).unwrap();
        assert_abs_diff_eq!(r.f, 0.0);
        assert_abs_diff_eq!(r.p, 1.0);
        assert_eq!((r.df_between, r.df_within), (2, 6));
    }

    #[test]
    fn degrees_of_freedom_follow_group_sizes() {
        let groups: Vec<Vec<f64>> = [60usize, 29, 35]
            .iter()
            .enumerate()
            .map(|(k, &n)| (0..n).map(|i| (i % 7) as f64 + k as f64 * 0.1).collect())
            .collect();
        let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
        let r = anova_oneway(&refs).unwrap();
        assert_eq!((r.df_between, r.df_within), (2, 121));
    }

    #[test]
    fn zero_within_variance_is_flagged() {
        let r = anova_oneway(&[&[0.0, 0.0], &[1.0, 1.0]]).unwrap();
        assert!(r.degenerate);
        assert!(r.f.is_infinite());
        assert_eq!(r.p, 0.0);
    }

    #[test]
    fn textbook_anova() {
        // group means 2, 4, 6; grand mean 4; SSB = 3*(4+0+4) = 24; SSW = 2+2+2 = 6
        let r = anova_oneway(&[&[1.0, 2.0, 3.0], &[3.0, 4.0, 5.0], &[5.0, 6.0, 7.0]]).unwrap();
        assert_abs_diff_eq!(r.f, (24.0 / 2.0) / (6.0 / 6.0), epsilon = 1e-12);
        assert!(r.p < 0.01);
    }

    #[test]
    fn paired_zero_mean_difference() {
        let r = paired_t(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(r.t, 0.0);
        assert_abs_diff_eq!(r.p, 1.0);
        assert_eq!(r.df, 2);
        assert_eq!(r.pearson_r, None);
    }

    #[test]
    fn paired_identical_series_rejected() {
        let a = [1.0, 4.0, 2.0];
        assert_eq!(paired_t(&a, &a), Err(StatsError::ZeroVarianceDifferences));
    }

    #[test]
    fn paired_df() {
        let a: Vec<f64> = (0..66).map(|i| (i % 9) as f64).collect();
        let b: Vec<f64> = (0..66).map(|i| (i % 5) as f64).collect();
        assert_eq!(paired_t(&a, &b).unwrap().df, 65);
    }
}
