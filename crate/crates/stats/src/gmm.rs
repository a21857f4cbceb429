//! Two-component univariate Gaussian mixture fitted by EM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::descriptive::{mean, variance};
use crate::error::{check_finite, require_len, Result, StatsError};

const SD_FLOOR: f64 = 1e-6;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmOptions {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self { restarts: 10, tol: 1e-8, max_iter: 500, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm2Fit {
    pub weights: [f64; 2],
    /// Ascending.
    pub means: [f64; 2],
    pub sds: [f64; 2],
    /// Point between the means where both weighted densities agree.
    pub threshold: f64,
    /// False when no equal-density point lies strictly between the means
    /// (one component dominates everywhere); `threshold` is then the
    /// equal-density root closest to the midpoint, or the midpoint itself.
    pub separated: bool,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood after every EM iteration of the winning restart.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl Gmm2Fit {
    /// Posterior probability of the upper component at `x`.
    pub fn posterior_upper(&self, x: f64) -> f64 {
        let lo = self.weights[0] * normal_pdf(x, self.means[0], self.sds[0]);
        let hi = self.weights[1] * normal_pdf(x, self.means[1], self.sds[1]);
        hi / (lo + hi)
    }
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    (log_normal_pdf(x, mean, sd)).exp()
}

fn log_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// Fit with `opts.restarts` EM runs and keep the best log-likelihood. The
/// first start uses the means of the lower and upper quartile groups and the
/// pooled SD; later starts split the sample at seeded random quantiles.
pub fn fit_gmm2(values: &[f64], opts: &GmmOptions) -> Result<Gmm2Fit> {
    check_finite(values)?;
    require_len(values, 6)?;
    if opts.restarts == 0 {
        return Err(StatsError::InvalidArgument("restarts must be positive".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(StatsError::DegenerateComponent);
    }
    let pooled_sd = variance(&sorted).sqrt().max(SD_FLOOR * 10.0);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<Gmm2Fit> = None;
    for restart in 0..opts.restarts {
        let (lo_q, hi_q) = if restart == 0 {
            (0.25, 0.75)
        } else {
            let q = rng.random_range(0.05..0.45);
            (q, 1.0 - rng.random_range(0.05..0.45))
        };
        let init = quantile_start(&sorted, lo_q, hi_q, pooled_sd);
        if let Some(fit) = run_em(&sorted, init, opts) {
            if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
                best = Some(fit);
            }
        }
    }
    best.ok_or(StatsError::DegenerateComponent)
}

#[derive(Debug, Clone, Copy)]
struct Params {
    w: [f64; 2],
    mu: [f64; 2],
    sd: [f64; 2],
}

/// Means of the observations below the `lo_q` quantile and above the `hi_q`
/// quantile.
fn quantile_start(sorted: &[f64], lo_q: f64, hi_q: f64, sd: f64) -> Params {
    let n = sorted.len();
    let lo_end = ((lo_q * n as f64).ceil() as usize).clamp(1, n - 1);
    let hi_start = ((hi_q * n as f64).floor() as usize).clamp(1, n - 1);
    let mut mu = [mean(&sorted[..lo_end]), mean(&sorted[hi_start..])];
    if mu[0] == mu[1] {
        mu = [sorted[0], sorted[n - 1]];
    }
    Params { w: [0.5, 0.5], mu, sd: [sd, sd] }
}

fn log_likelihood(x: &[f64], p: &Params) -> f64 {
    x.iter()
        .map(|&v| {
            let a = p.w[0].ln() + log_normal_pdf(v, p.mu[0], p.sd[0]);
            let b = p.w[1].ln() + log_normal_pdf(v, p.mu[1], p.sd[1]);
            log_sum_exp(a, b)
        })
        .sum()
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `None` when a component collapses.
fn run_em(x: &[f64], mut p: Params, opts: &GmmOptions) -> Option<Gmm2Fit> {
    let n = x.len() as f64;
    let mut resp = vec![0.0; x.len()];
    let mut ll = log_likelihood(x, &p);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        // E-step: responsibility of component 1.
        for (r, &v) in resp.iter_mut().zip(x) {
            let a = p.w[0].ln() + log_normal_pdf(v, p.mu[0], p.sd[0]);
            let b = p.w[1].ln() + log_normal_pdf(v, p.mu[1], p.sd[1]);
            *r = (b - log_sum_exp(a, b)).exp();
        }
        // M-step.
        let n1: f64 = resp.iter().sum();
        let n0 = n - n1;
        if n0 < 1e-9 || n1 < 1e-9 {
            return None;
        }
        let mu0 = x.iter().zip(&resp).map(|(v, r)| (1.0 - r) * v).sum::<f64>() / n0;
        let mu1 = x.iter().zip(&resp).map(|(v, r)| r * v).sum::<f64>() / n1;
        let var0 = x.iter().zip(&resp).map(|(v, r)| (1.0 - r) * (v - mu0).powi(2)).sum::<f64>() / n0;
        let var1 = x.iter().zip(&resp).map(|(v, r)| r * (v - mu1).powi(2)).sum::<f64>() / n1;
        let sd = [var0.sqrt(), var1.sqrt()];
        if sd[0] < SD_FLOOR || sd[1] < SD_FLOOR {
            return None;
        }
        p = Params { w: [n0 / n, n1 / n], mu: [mu0, mu1], sd };
        let next = log_likelihood(x, &p);
        trace.push(next);
        let delta = (next - ll).abs();
        ll = next;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    // Order components by mean.
    if p.mu[0] > p.mu[1] {
        p.w.swap(0, 1);
        p.mu.swap(0, 1);
        p.sd.swap(0, 1);
    }
    let (threshold, separated) = equal_density_point(&p);
    Some(Gmm2Fit {
        weights: p.w,
        means: p.mu,
        sds: p.sd,
        threshold,
        separated,
        log_likelihood: ll,
        converged,
        iterations,
        trace,
    })
}

/// Solves `w0 N(t; m0, s0) = w1 N(t; m1, s1)` for `t`.
fn equal_density_point(p: &Params) -> (f64, bool) {
    let [m0, m1] = p.mu;
    let [s0, s1] = p.sd;
    let mid = 0.5 * (m0 + m1);
    // log w0 - log s0 - (t-m0)^2/(2 s0^2) = log w1 - log s1 - (t-m1)^2/(2 s1^2)
    let a = 1.0 / (2.0 * s1 * s1) - 1.0 / (2.0 * s0 * s0);
    let b = m0 / (s0 * s0) - m1 / (s1 * s1);
    let c = m1 * m1 / (2.0 * s1 * s1) - m0 * m0 / (2.0 * s0 * s0)
        + (p.w[0] / s0).ln()
        - (p.w[1] / s1).ln();
    let roots: Vec<f64> = if a.abs() < 1e-12 * (b.abs() + c.abs()).max(1.0) {
        if b.abs() < 1e-300 {
            vec![]
        } else {
            vec![-c / b]
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            vec![]
        } else {
            let sq = disc.sqrt();
            // Numerically stable pair.
            let q = -0.5 * (b + b.signum() * sq);
            let mut r = vec![q / a];
            if q != 0.0 {
                r.push(c / q);
            }
            r
        }
    };
    if let Some(&t) = roots.iter().find(|&&t| t > m0 && t < m1) {
        return (t, true);
    }
    let nearest = roots
        .iter()
        .copied()
        .min_by(|x, y| (x - mid).abs().total_cmp(&(y - mid).abs()));
    (nearest.unwrap_or(mid), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn mirror_symmetric_sample_splits_at_zero() {
        let x = [-1.1, -1.0, -0.9, 0.9, 1.0, 1.1];
        let fit = fit_gmm2(&x, &GmmOptions::default()).unwrap();
        assert!(fit.threshold.abs() < 0.05, "{fit:?}");
        assert!(fit.separated);
        assert_abs_diff_eq!(fit.posterior_upper(fit.threshold), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn well_separated_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Normal::new(2.0, 0.3).unwrap();
        let b = Normal::new(4.0, 0.3).unwrap();
        let mut x: Vec<f64> = (0..100).map(|_| a.sample(&mut rng)).collect();
        x.extend((0..100).map(|_| b.sample(&mut rng)));
        let fit = fit_gmm2(&x, &GmmOptions { seed: 3, ..Default::default() }).unwrap();
        assert!((2.7..=3.3).contains(&fit.threshold), "{}", fit.threshold);
        assert!(fit.converged);
        assert_abs_diff_eq!(fit.weights[0] + fit.weights[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let x = [1.0, 2.0, 2.0, 2.0, 1.0, 4.0, 4.0, 5.0, 3.0, 4.0, 2.0, 4.0, 1.5, 3.7];
        let fit = fit_gmm2(&x, &GmmOptions::default()).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn constant_sample_is_degenerate() {
        assert_eq!(fit_gmm2(&[3.0; 8], &GmmOptions::default()), Err(StatsError::DegenerateComponent));
    }

    #[test]
    fn equal_variance_threshold_closed_form() {
        // equal sds: t = mid + s^2 ln(w0/w1) / (m1 - m0)
        let p = Params { w: [0.3, 0.7], mu: [0.0, 2.0], sd: [1.0, 1.0] };
        let (t, sep) = equal_density_point(&p);
        assert!(sep);
        assert_abs_diff_eq!(t, 1.0 + (0.3f64 / 0.7).ln() / 2.0, epsilon = 1e-12);
    }
}
