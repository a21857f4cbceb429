//! ANOVA with Holm correction, paired t, Mann-Whitney, Spearman and OLS on
//! small hand-written samples.
//!
//! cargo run --example hypothesis_tests

use selfclone::stats::{anova_oneway, holm_bonferroni, mann_whitney_u, ols_regress, paired_t, spearman};

fn main() {
    let baseline = [18.0, 20.0, 17.0, 21.0, 19.0, 16.0];
    let scx = [22.0, 24.0, 21.0, 25.0, 23.0, 20.0];
    let scs = [21.0, 23.0, 22.0, 24.0, 20.0, 22.0];
    let measures = [
        ("total", [&baseline[..], &scx[..], &scs[..]]),
        ("cognitive", [&baseline[..3], &scx[..3], &scs[..3]]),
        ("emotional", [&baseline[3..], &scx[3..], &scs[3..]]),
    ];
    let fits: Vec<_> = measures.iter().map(|(_, g)| anova_oneway(g).unwrap()).collect();
    let holm = holm_bonferroni(&fits.iter().map(|a| a.p).collect::<Vec<_>>(), 0.05).unwrap();
    for (((name, _), a), (adj, reject)) in measures.iter().zip(&fits).zip(holm.adjusted.iter().zip(&holm.reject)) {
        println!("{name:9} F({},{})={:.3} p={:.4} holm={adj:.4} reject={reject}", a.df_between, a.df_within, a.f, a.p);
    }

    let t = paired_t(&scx, &scs).unwrap();
    println!("paired t({})={:.3} p={:.4}", t.df, t.t, t.p);

    let mw = mann_whitney_u(&[3.0, 4.0, 4.0, 5.0], &[1.0, 2.0, 3.0, 2.0]).unwrap();
    println!("Mann-Whitney U={} z={:.3} p={:.4}", mw.u, mw.z, mw.p);

    let rho = spearman(&baseline, &scx).unwrap();
    println!("Spearman rho={:.3} p={:.4}", rho.r, rho.p);

    let literacy = vec![40.0, 55.0, 61.0, 47.0, 70.0, 52.0, 66.0, 44.0];
    let attitude = vec![20.0, 25.0, 31.0, 22.0, 35.0, 24.0, 30.0, 26.0];
    let y = [17.0, 20.0, 23.0, 18.0, 26.0, 19.0, 24.0, 19.0];
    let fit = ols_regress(&[("literacy".into(), literacy), ("attitude".into(), attitude)], &y).unwrap();
    println!("OLS F({},{})={:.2} R2={:.3}", fit.df_model, fit.df_residual, fit.f, fit.r2);
    for c in &fit.coefficients {
        println!("  {:9} b={:.3} se={:.3} p={:.4}", c.name, c.estimate, c.std_error, c.p);
    }
}
