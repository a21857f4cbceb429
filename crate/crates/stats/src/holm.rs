//! Holm-Bonferroni step-down correction.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolmResult {
    /// Adjusted p-values in the caller's order.
    pub adjusted: Vec<f64>,
    pub reject: Vec<bool>,
    /// Per-input step threshold `alpha / (m - rank + 1)`, where `rank` is the
    /// 1-based position of that p-value in ascending order.
    pub thresholds: Vec<f64>,
    /// Thresholds by rank: `[alpha/m, alpha/(m-1), ..., alpha]`.
    pub rank_thresholds: Vec<f64>,
}

pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> Result<HolmResult> {
    if let Some(&p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::InvalidProbability(p));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    // Stable sort keeps tied p-values in input order.
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));

    let rank_thresholds: Vec<f64> = (0..m).map(|k| alpha / (m - k) as f64).collect();
    let mut adjusted = vec![0.0; m];
    let mut reject = vec![false; m];
    let mut thresholds = vec![0.0; m];
    let mut running = 0.0_f64;
    let mut still_rejecting = true;
    for (k, &idx) in order.iter().enumerate() {
        let p = p_values[idx];
        running = running.max(((m - k) as f64 * p).min(1.0));
        adjusted[idx] = running;
        thresholds[idx] = rank_thresholds[k];
        still_rejecting &= p <= rank_thresholds[k];
        reject[idx] = still_rejecting;
    }
    Ok(HolmResult { adjusted, reject, thresholds, rank_thresholds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hand_worked_example() {
        // sorted .01 .03 .04 -> 3*.01, max(.03, 2*.03), max(.06, .04)
        let r = holm_bonferroni(&[0.01, 0.04, 0.03], 0.05).unwrap();
        for (got, want) in r.adjusted.iter().zip([0.03, 0.06, 0.06]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(r.reject, vec![true, false, false]);
    }

    #[test]
    fn three_test_thresholds() {
        let r = holm_bonferroni(&[0.015, 0.018, 0.023], 0.05).unwrap();
        assert_abs_diff_eq!(r.rank_thresholds[0], 0.05 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.rank_thresholds[1], 0.025, epsilon = 1e-15);
        assert_abs_diff_eq!(r.rank_thresholds[2], 0.05, epsilon = 1e-15);
        assert_eq!(r.reject, vec![true, true, true]);
    }

    #[test]
    fn nothing_rejected_at_one() {
        let r = holm_bonferroni(&[1.0, 1.0, 1.0], 0.05).unwrap();
        assert_eq!(r.adjusted, vec![1.0; 3]);
        assert_eq!(r.reject, vec![false; 3]);
    }

    #[test]
    fn stops_at_first_failure() {
        // .001 passes .0125, .02 fails .0167 -> later ones kept even though .03 <= .05
        let r = holm_bonferroni(&[0.02, 0.001, 0.03, 0.04], 0.05).unwrap();
        assert_eq!(r.reject, vec![false, true, false, false]);
    }

    #[test]
    fn out_of_range() {
        assert_eq!(holm_bonferroni(&[0.2, 1.5], 0.05), Err(StatsError::InvalidProbability(1.5)));
    }
}
