//! Hartigan's dip statistic and a seeded Monte Carlo test of unimodality.
//!
//! The statistic follows the classic greatest-convex-minorant /
//! least-concave-majorant cycling over a shrinking modal interval. All
//! internal distances are kept in counts (multiples of `1/n`) and halved
//! and normalised only at the end, so the result is `max(...) / (2n)`.
//! With `n` distinct observations the dip is never below `1/(2n)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, require_len, Result, StatsError};

pub const DEFAULT_BOOTSTRAPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipResult {
    pub dip: f64,
    pub p_value: f64,
    pub n_boot: usize,
}

/// Dip statistic of an unsorted sample.
pub fn dip_statistic(values: &[f64]) -> Result<f64> {
    check_finite(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(dip_sorted(&sorted))
}

/// Dip test with a p-value estimated from `n_boot` uniform(0,1) samples of
/// the same size. Replicate `b` draws from ChaCha stream `b` of `seed`, so
/// the result does not depend on thread scheduling.
pub fn dip_test(values: &[f64], n_boot: usize, seed: u64) -> Result<DipResult> {
    require_len(values, 4)?;
    if n_boot == 0 {
        return Err(StatsError::InvalidArgument("n_boot must be positive".into()));
    }
    let dip = dip_statistic(values)?;
    let n = values.len();
    let exceed = (0..n_boot as u64)
        .into_par_iter()
        .filter(|&b| uniform_dip(n, seed, b) >= dip)
        .count();
    Ok(DipResult { dip, p_value: exceed as f64 / n_boot as f64, n_boot })
}

fn uniform_dip(n: usize, seed: u64, stream: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut draws: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    draws.sort_by(f64::total_cmp);
    dip_sorted(&draws)
}

/// Dip of an ascending sample.
pub fn dip_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    // 1-based views keep the index arithmetic identical to the textbook form.
    let mut x = Vec::with_capacity(n + 1);
    x.push(f64::NAN);
    x.extend_from_slice(sorted);

    let mut dip = 1.0_f64;
    if n < 2 || x[n] == x[1] {
        return dip / (2.0 * n as f64);
    }

    // Change points of the convex minorant: mn[j] is the previous hull index.
    let mut mn = vec![0usize; n + 1];
    mn[1] = 1;
    for j in 2..=n {
        mn[j] = j - 1;
        loop {
            let mnj = mn[j];
            let mnmnj = mn[mnj];
            if mnj == 1
                || (x[j] - x[mnj]) * ((mnj - mnmnj) as f64)
                    < (x[mnj] - x[mnmnj]) * ((j - mnj) as f64)
            {
                break;
            }
            mn[j] = mnmnj;
        }
    }

    // Change points of the concave majorant.
    let mut mj = vec![0usize; n + 1];
    mj[n] = n;
    for k in (1..n).rev() {
        mj[k] = k + 1;
        loop {
            let mjk = mj[k];
            let mjmjk = mj[mjk];
            if mjk == n
                || (x[k] - x[mjk]) * (mjk as f64 - mjmjk as f64)
                    < (x[mjk] - x[mjmjk]) * (k as f64 - mjk as f64)
            {
                break;
            }
            mj[k] = mjmjk;
        }
    }

    let mut gcm = vec![0usize; n + 2];
    let mut lcm = vec![0usize; n + 2];
    let mut low = 1usize;
    let mut high = n;

    loop {
        // GCM change points from high down to low.
        gcm[1] = high;
        let mut i = 1;
        while gcm[i] > low {
            gcm[i + 1] = mn[gcm[i]];
            i += 1;
        }
        let l_gcm = i;
        let mut ig = l_gcm;
        let mut ix = ig - 1;

        // LCM change points from low up to high.
        lcm[1] = low;
        let mut i = 1;
        while lcm[i] < high {
            lcm[i + 1] = mj[lcm[i]];
            i += 1;
        }
        let l_lcm = i;
        let mut ih = l_lcm;
        let mut iv = 2;

        // Largest distance between GCM and LCM on [low, high].
        let mut d = 0.0_f64;
        if l_gcm != 2 || l_lcm != 2 {
            loop {
                let gcmix = gcm[ix];
                let lcmiv = lcm[iv];
                if gcmix > lcmiv {
                    let gcmi1 = gcm[ix + 1];
                    let dx = (lcmiv as f64 - gcmi1 as f64 + 1.0)
                        - (x[lcmiv] - x[gcmi1]) * (gcmix - gcmi1) as f64
                            / (x[gcmix] - x[gcmi1]);
                    iv += 1;
                    if dx >= d {
                        d = dx;
                        ig = ix + 1;
                        ih = iv - 1;
                    }
                } else {
                    let lcmiv1 = lcm[iv - 1];
                    let dx = (x[gcmix] - x[lcmiv1]) * (lcmiv - lcmiv1) as f64
                        / (x[lcmiv] - x[lcmiv1])
                        - (gcmix as f64 - lcmiv1 as f64 - 1.0);
                    ix -= 1;
                    if dx >= d {
                        d = dx;
                        ig = ix + 1;
                        ih = iv;
                    }
                }
                if ix < 1 {
                    ix = 1;
                }
                if iv > l_lcm {
                    iv = l_lcm;
                }
                if gcm[ix] == lcm[iv] {
                    break;
                }
            }
        } else {
            d = 1.0;
        }

        if d < dip {
            break;
        }

        // Dip of the convex minorant on the left of the modal interval.
        let mut dip_l = 0.0_f64;
        for j in ig..l_gcm {
            let mut max_t = 1.0_f64;
            let je = gcm[j];
            let jb = gcm[j + 1];
            if je - jb > 1 && x[je] != x[jb] {
                let c = (je - jb) as f64 / (x[je] - x[jb]);
                for jj in jb..=je {
                    let t = (jj - jb + 1) as f64 - (x[jj] - x[jb]) * c;
                    max_t = max_t.max(t);
                }
            }
            dip_l = dip_l.max(max_t);
        }

        // Dip of the concave majorant on the right.
        let mut dip_u = 0.0_f64;
        for j in ih..l_lcm {
            let mut max_t = 1.0_f64;
            let jb = lcm[j];
            let je = lcm[j + 1];
            if je - jb > 1 && x[je] != x[jb] {
                let c = (je - jb) as f64 / (x[je] - x[jb]);
                for jj in jb..=je {
                    let t = (x[jj] - x[jb]) * c - (jj as f64 - jb as f64 - 1.0);
                    max_t = max_t.max(t);
                }
            }
            dip_u = dip_u.max(max_t);
        }

        dip = dip.max(dip_l.max(dip_u));

        // Stop once the modal interval no longer shrinks.
        if low == gcm[ig] && high == lcm[ih] {
            break;
        }
        low = gcm[ig];
        high = lcm[ih];
    }

    dip / (2.0 * n as f64)
}
