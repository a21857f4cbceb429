//! Test believability ratings for bimodality and split them with a mixture.
//!
//! cargo run --release --example dip_and_gmm -- 120 7

use selfclone::simulate::believability_sample;
use selfclone::stats::{descriptives, dip_test, fit_gmm2, GmmOptions};

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("integer"));
    let n = args.next().unwrap_or(120) as usize;
    let seed = args.next().unwrap_or(7);
    let ratings = believability_sample(n, seed);

    let d = descriptives(&ratings).unwrap();
    println!("n={n} mean={:.2} sd={:.2}", d.mean, d.sd);
    for v in 1..=5 {
        let count = ratings.iter().filter(|r| **r == v as f64).count();
        println!("  {v}: {}", "#".repeat(count));
    }

    let dip = dip_test(&ratings, 10_000, seed).unwrap();
    println!("dip D={:.4} p={:.4} ({} bootstraps)", dip.dip, dip.p_value, dip.n_boot);

    let fit = fit_gmm2(&ratings, &GmmOptions { seed, ..GmmOptions::default() }).unwrap();
    println!(
        "GMM means {:.2}/{:.2} weights {:.2}/{:.2} threshold {:.2}",
        fit.means[0], fit.means[1], fit.weights[0], fit.weights[1], fit.threshold
    );
    let high = ratings.iter().filter(|r| **r > fit.threshold).count();
    println!("{high} of {n} above threshold");
}
