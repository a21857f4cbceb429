//! Tail probabilities from `statrs`, clamped into [0, 1].

use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};

pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df must be positive");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

pub fn f_upper_tail(f: f64, df1: f64, df2: f64) -> f64 {
    if f.is_infinite() {
        return 0.0;
    }
    if f <= 0.0 {
        return 1.0;
    }
    let dist = FisherSnedecor::new(df1, df2).expect("df must be positive");
    dist.sf(f).clamp(0.0, 1.0)
}

pub fn normal_two_tailed(z: f64) -> f64 {
    let dist = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * dist.sf(z.abs())).clamp(0.0, 1.0)
}

pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).expect("df must be positive").inverse_cdf(p)
}
