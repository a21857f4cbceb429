//! Ranking and the Mann-Whitney U test.

use serde::{Deserialize, Serialize};

use crate::dist::normal_two_tailed;
use crate::error::{check_finite, Result, StatsError};

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of the tie groups in `values`.
pub fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        out.push(j - i + 1);
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U for the first sample.
    pub u: f64,
    /// Normal score with tie and continuity correction.
    pub z: f64,
    /// Normal score with tie correction only.
    pub z_uncorrected: f64,
    pub p: f64,
    pub mean_u: f64,
    pub sd_u: f64,
}

/// Expected value and tie-corrected standard deviation of U under the null.
pub fn u_null_moments(n1: usize, n2: usize, ties: &[usize]) -> (f64, f64) {
    let (a, b) = (n1 as f64, n2 as f64);
    let n = a + b;
    let tie_sum: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
    let var = a * b / 12.0 * ((n + 1.0) - tie_sum / (n * (n - 1.0)));
    (a * b / 2.0, var.max(0.0).sqrt())
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::TooFewValues { have: a.len().min(b.len()), need: 1 });
    }
    check_finite(a)?;
    check_finite(b)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let n1 = a.len() as f64;
    let r1: f64 = ranks[..a.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let (mean_u, sd_u) = u_null_moments(a.len(), b.len(), &tie_groups(&pooled));
    if sd_u == 0.0 {
        return Ok(MannWhitney { u, z: 0.0, z_uncorrected: 0.0, p: 1.0, mean_u, sd_u });
    }
    let diff = u - mean_u;
    let z_uncorrected = diff / sd_u;
    let z = if diff.abs() <= 0.5 { 0.0 } else { (diff - 0.5 * diff.signum()) / sd_u };
    Ok(MannWhitney { u, z, z_uncorrected, p: normal_two_tailed(z), mean_u, sd_u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn fully_separated_groups() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert_abs_diff_eq!(r.mean_u, 4.5);
        assert_abs_diff_eq!(r.sd_u, 5.25f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.z_uncorrected, -4.5 / 5.25f64.sqrt(), epsilon = 1e-12);
        assert!((r.z_uncorrected + 1.96).abs() < 0.01);
        assert_abs_diff_eq!(r.z, -4.0 / 5.25f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn identical_multisets_are_centred() {
        let a = [1.0, 2.0, 2.0, 5.0];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_abs_diff_eq!(r.u, 8.0);
        assert_eq!(r.z, 0.0);
        assert_abs_diff_eq!(r.p, 1.0);
    }

    #[test]
    fn all_tied() {
        let r = mann_whitney_u(&[2.0, 2.0], &[2.0]).unwrap();
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn empty_group_rejected() {
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }
}
