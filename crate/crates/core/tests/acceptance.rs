//! One pass/fail line per acceptance criterion. Run with
//! `cargo test --release --test acceptance -- --nocapture --test-threads=1`
//! to see the lines in order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

use selfclone::dataset::read_csv;
use selfclone::instruments::{believability_group, score_tweets, zscore_composite, BelievabilityGroup, InstrumentId};
use selfclone::prompt::{render_prompt, residual_placeholders, PromptBindings, PromptKind};
use selfclone::session::{Condition, Wave};
use selfclone::simulate::believability_sample;
use selfclone::ssp::{canonical_ssp_text, parse_ssp_output, random_rating, Intensity, SupportType};
use selfclone::stats::{
    dip_statistic, dip_test, fit_gmm2, holm_bonferroni, mann_whitney_u, ols_regress, paired_t, GmmOptions,
};

/// Collects named checks and prints a single line for the criterion.
struct Criterion {
    name: &'static str,
    started: Instant,
    failures: Vec<String>,
}

impl Criterion {
    fn new(name: &'static str) -> Self {
        Self { name, started: Instant::now(), failures: Vec::new() }
    }

    fn check(&mut self, label: impl Into<String>, ok: bool) {
        if !ok {
            self.failures.push(label.into());
        }
    }

    fn finish(self, limit: Option<Duration>) {
        let elapsed = self.started.elapsed();
        let mut failures = self.failures;
        if let Some(limit) = limit {
            if elapsed > limit {
                failures.push(format!("took {elapsed:.1?}, limit {limit:?}"));
            }
        }
        if failures.is_empty() {
            println!("PASS {} ({elapsed:.1?})", self.name);
        } else {
            println!("FAIL {} ({elapsed:.1?}): {}", self.name, failures.join("; "));
            panic!("{} failed: {}", self.name, failures.join("; "));
        }
    }
}

fn fixture(name: &str) -> String {
    fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).unwrap()
}

#[test]
fn prompt_fixtures() {
    let mut c = Criterion::new("prompt fixtures");
    let sentinels = PromptBindings::name("SENTINEL_NAME").with_chatlog("SENTINEL_CHATLOG").with_ssp_result("SENTINEL_SSP");
    let real = PromptBindings::name("Jordan")
        .with_chatlog("Jordan: I keep putting off my thesis.\nFriend: What makes it hard to start?")
        .with_ssp_result(canonical_ssp_text(&selfclone::ssp::fallback_rating()));
    for kind in PromptKind::ALL {
        let rendered = render_prompt(kind, &sentinels).unwrap();
        let expected = fixture(&format!("expected_{}.txt", kind.file_stem()));
        c.check(format!("{kind:?} differs from fixture"), rendered.system_text == expected);
        let filled = render_prompt(kind, &real).unwrap();
        let left = residual_placeholders(&filled.system_text);
        c.check(format!("{kind:?} residual placeholders {left:?}"), left.is_empty());
    }
    c.finish(Some(Duration::from_secs(1)));
}

#[test]
fn ssp_round_trip() {
    let mut c = Criterion::new("SSP round-trip");
    let r = parse_ssp_output(&fixture("ssp_sample_result.txt")).unwrap();
    let early = [
        (SupportType::Informational, Intensity::Low, vec!["situational appraisals"]),
        (SupportType::Esteem, Intensity::High, vec!["compliments", "validations"]),
        (SupportType::Emotional, Intensity::High, vec!["understanding or empathy", "encouragement"]),
    ];
    for (t, i, subs) in early {
        let e = r.early.entry(t).unwrap();
        c.check(format!("early {t:?}"), e.intensity == i && e.subcategories == subs && !e.none_identified);
    }
    c.check("late informational", r.late.entry(SupportType::Informational).unwrap().none_identified);
    c.check("late esteem", r.late.entry(SupportType::Esteem).unwrap().subcategories == ["compliments"]);
    c.check("late emotional", r.late.entry(SupportType::Emotional).unwrap().subcategories == ["encouragement"]);
    c.check("sample re-serialization", parse_ssp_output(&canonical_ssp_text(&r)).ok() == Some(r));

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let bad = (0..1000)
        .filter(|_| {
            let rating = random_rating(&mut rng);
            parse_ssp_output(&canonical_ssp_text(&rating)).ok() != Some(rating)
        })
        .count();
    c.check(format!("{bad} of 1000 random ratings failed to round-trip"), bad == 0);
    c.finish(Some(Duration::from_secs(5)));
}

fn dip_calibration(reps: usize, n: usize, boots: usize, seed: u64) -> f64 {
    let mut rejected = 0;
    for r in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        if dip_test(&x, boots, seed.wrapping_add(1 + r as u64)).unwrap().p_value < 0.05 {
            rejected += 1;
        }
    }
    rejected as f64 / reps as f64
}

fn choose_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

#[test]
fn stats_oracle_suite() {
    let mut c = Criterion::new("stats oracle suite");

    let d = dip_statistic(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
    c.check(format!("dip two-point = {d}"), (d - 0.25).abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let below = (0..1000)
        .filter(|_| {
            let n = rng.random_range(4..200);
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
            dip_statistic(&x).unwrap() < 1.0 / (2.0 * n as f64) - 1e-12
        })
        .count();
    c.check(format!("{below} samples below 1/(2n)"), below == 0);

    let started = Instant::now();
    let rate = dip_calibration(500, 100, 2000, 42);
    let took = started.elapsed();
    println!("  dip calibration: rejection {:.1}% over 500 uniform replications ({took:.1?})", rate * 100.0);
    c.check(format!("dip calibration rejection {:.1}%", rate * 100.0), (0.04..=0.06).contains(&rate));
    c.check(format!("dip calibration took {took:.1?}"), took < Duration::from_secs(120));

    let normal = Normal::new(1.0, 0.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let half: Vec<f64> = (0..100).map(|_| normal.sample(&mut rng)).collect();
    let mirror: Vec<f64> = half.iter().flat_map(|v| [*v, -*v]).collect();
    let fit = fit_gmm2(&mirror, &GmmOptions::default()).unwrap();
    c.check(format!("GMM mirror threshold {}", fit.threshold), fit.threshold.abs() <= 0.05);

    let h = holm_bonferroni(&[0.01, 0.04, 0.03], 0.05).unwrap();
    let adj_ok = h.adjusted.iter().zip([0.03, 0.06, 0.06]).all(|(a, b)| (a - b).abs() < 1e-12);
    c.check(format!("Holm adjusted {:?}", h.adjusted), adj_ok);
    let thr_ok = h.rank_thresholds.iter().zip([0.0167, 0.025, 0.05]).all(|(a, b)| (a - b).abs() < 5e-5);
    c.check(format!("Holm thresholds {:?}", h.rank_thresholds), thr_ok);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x1: Vec<f64> = (0..180).map(|_| rng.random_range(12.0..84.0)).collect();
    let x2: Vec<f64> = (0..180).map(|_| rng.random_range(5.0..50.0)).collect();
    let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 3.0 + 0.5 * a - 0.25 * b).collect();
    let fit = ols_regress(&[("a".into(), x1.clone()), ("b".into(), x2.clone())], &y).unwrap();
    c.check(format!("OLS exact R2 {}", fit.r2), (fit.r2 - 1.0).abs() < 1e-9);
    let noisy: Vec<f64> = y.iter().map(|v| v + rng.random_range(-5.0..5.0)).collect();
    let fit = ols_regress(&[("a".into(), x1), ("b".into(), x2)], &noisy).unwrap();
    c.check(format!("OLS df ({},{})", fit.df_model, fit.df_residual), (fit.df_model, fit.df_residual) == (2, 177));

    let pool = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 4.0, 5.0];
    let mut mw_bad = 0;
    for n in 2..=8 {
        for n1 in 1..n {
            for idx in choose_subsets(n, n1) {
                let a: Vec<f64> = idx.iter().map(|&i| pool[i]).collect();
                let b: Vec<f64> = (0..n).filter(|i| !idx.contains(i)).map(|i| pool[i]).collect();
                let exact: f64 = a
                    .iter()
                    .flat_map(|x| b.iter().map(move |y| if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 }))
                    .sum();
                if (mann_whitney_u(&a, &b).unwrap().u - exact).abs() > 1e-9 {
                    mw_bad += 1;
                }
            }
        }
    }
    c.check(format!("{mw_bad} Mann-Whitney splits disagree with enumeration"), mw_bad == 0);

    let a: Vec<f64> = (0..17).map(|i| (i * 7 % 11) as f64).collect();
    let b: Vec<f64> = (0..17).map(|i| (i * 5 % 13) as f64).collect();
    c.check("paired-t df", paired_t(&a, &b).unwrap().df == 16);
    c.finish(None);
}

#[test]
fn scoring() {
    let mut c = Criterion::new("scoring");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut lo, mut hi, mut identity_bad) = (f64::MAX, f64::MIN, 0);
    for _ in 0..10_000 {
        let values: Vec<i64> = (0..6).map(|_| rng.random_range(1..=5)).collect();
        let s = score_tweets(&values).unwrap();
        lo = lo.min(s.total);
        hi = hi.max(s.total);
        if s.total != s.cognitive + s.emotional {
            identity_bad += 1;
        }
    }
    let floor = score_tweets(&[1; 6]).unwrap().total;
    let ceil = score_tweets(&[5; 6]).unwrap().total;
    c.check(format!("TWEETS extremes [{floor},{ceil}]"), (floor, ceil) == (6.0, 30.0));
    c.check(format!("TWEETS random range [{lo},{hi}]"), lo >= 6.0 && hi <= 30.0);
    c.check(format!("{identity_bad} TWEETS subscale-sum violations"), identity_bad == 0);
    c.check("TWEETS rejects out-of-range", score_tweets(&[0, 1, 1, 1, 1, 1]).is_err());

    let ues = InstrumentId::Ues.spec();
    let involution = (ues.scale_min..=ues.scale_max).all(|v| ues.reverse(ues.reverse(v)) == v);
    c.check("UES reversal is an involution", involution);
    let reversed: Vec<&str> = ues.items.iter().filter(|i| i.reverse_scored).map(|i| i.key.as_str()).collect();
    c.check(format!("UES reversed items {reversed:?}"), reversed.len() == 3);

    for (rows_n, cols) in [(10, 3), (30, 4), (120, 5)] {
        let rows: Vec<Vec<f64>> =
            (0..rows_n).map(|_| (0..cols).map(|k| rng.random_range(1.0..7.0) * (k + 1) as f64).collect()).collect();
        let z = zscore_composite(&rows).unwrap();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        c.check(format!("composite mean {mean:e} for {rows_n}x{cols}"), mean.abs() < 1e-9);
    }

    let groups: BTreeMap<i64, BelievabilityGroup> = (1..=5).map(|s| (s, believability_group(s).unwrap())).collect();
    let expected = [1, 2].iter().all(|s| groups[s] == BelievabilityGroup::Low)
        && [3, 4, 5].iter().all(|s| groups[s] == BelievabilityGroup::High);
    c.check(format!("believability grouping {groups:?}"), expected);
    c.check("believability out of range", believability_group(0).is_err() && believability_group(6).is_err());
    c.finish(None);
}

fn selfclone(data_dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_selfclone"))
        .arg("--data-dir")
        .arg(data_dir)
        .args(args)
        .env_remove("STUDY_SEED")
        .output()
        .unwrap()
}

fn export(data_dir: &Path) -> String {
    let out = selfclone(data_dir, &["export"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn all_p_values(v: &Value, key: &str, out: &mut Vec<(String, f64)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                if let (true, Some(p)) = (k == "p" || k == "p_value" || k.ends_with("_p"), child.as_f64()) {
                    out.push((format!("{key}.{k}"), p));
                }
                all_p_values(child, &format!("{key}.{k}"), out);
            }
        }
        Value::Array(items) => items.iter().enumerate().for_each(|(i, x)| all_p_values(x, &format!("{key}[{i}]"), out)),
        _ => {}
    }
}

#[test]
fn end_to_end() {
    let mut c = Criterion::new("end-to-end");
    let dir = tempfile::tempdir().unwrap();
    let out = selfclone(dir.path(), &["simulate", "--n", "30", "--seed", "42"]);
    c.check(format!("simulate exited {}", out.status), out.status.success());

    let csv = export(dir.path());
    let rows = read_csv(csv.as_bytes()).unwrap();
    let primary: Vec<_> = rows.iter().filter(|r| r.wave == Wave::Primary).collect();
    for cond in Condition::ALL {
        let n = primary.iter().filter(|r| r.condition == cond).count();
        c.check(format!("{cond} has {n} participants"), n == 10);
    }
    let short = primary.iter().filter(|r| r.friend_messages.unwrap_or(0) < 10 || r.main_messages < 12).count();
    c.check(format!("{short} sessions below message minimums"), short == 0);

    let csv_path = dir.path().join("export.csv");
    fs::write(&csv_path, &csv).unwrap();
    let out = selfclone(dir.path(), &["analyze", csv_path.to_str().unwrap(), "--json"]);
    c.check(format!("analyze exited {}", out.status), out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    let b = &report["believability"];
    c.check("dip present", b["dip"]["dip"].is_number() && b["dip"]["p_value"].is_number());
    c.check("GMM threshold present", b["gmm"]["threshold"].is_number());
    let anova = report["engagement_anova"].as_array().cloned().unwrap_or_default();
    c.check(format!("{} engagement ANOVA lines", anova.len()), anova.len() == 3);
    for line in &anova {
        let n: u64 = line["groups"].as_array().unwrap().iter().map(|g| g["n"].as_u64().unwrap()).sum();
        let k = line["groups"].as_array().unwrap().len() as u64;
        let df = (line["anova"]["df_between"].as_u64(), line["anova"]["df_within"].as_u64());
        c.check(format!("{} df {df:?} for n={n}", line["measure"]), df == (Some(k - 1), Some(n - k)));
        c.check(format!("{} Holm", line["measure"]), line["holm_adjusted_p"].is_number());
    }
    c.check("Spearman present", report["engagement_believability"]["r"].is_number());
    let composites = report["composite_anova"].as_array().map_or(0, Vec::len);
    c.check(format!("{composites} composite lines"), composites == 2);
    let reg = &report["regression"];
    c.check(
        format!("regression df ({},{})", reg["df_model"], reg["df_residual"]),
        reg["df_model"] == 2 && reg["df_residual"].as_u64() == Some(primary.len() as u64 - 3),
    );
    let mut ps = Vec::new();
    all_p_values(&report, "report", &mut ps);
    let bad: Vec<_> = ps.iter().filter(|(_, p)| !(0.0..=1.0).contains(p)).collect();
    c.check(format!("{} p-values found, out of range: {bad:?}", ps.len()), ps.len() > 10 && bad.is_empty());

    let rejected = (0..100u64)
        .filter(|&seed| {
            let x = believability_sample(120, seed);
            dip_test(&x, 2000, seed).unwrap().p_value < 0.05
        })
        .count();
    println!("  bimodal believability: dip rejected in {rejected}/100 runs at n=120");
    c.check(format!("bimodal rejection {rejected}/100"), rejected >= 95);
    c.finish(Some(Duration::from_secs(300)));
}

#[test]
fn crash_recovery() {
    let mut c = Criterion::new("crash recovery");
    let reference = tempfile::tempdir().unwrap();
    let out = selfclone(reference.path(), &["simulate", "--n", "6", "--seed", "42"]);
    c.check("uninterrupted run", out.status.success());

    let crashed = tempfile::tempdir().unwrap();
    let out = selfclone(crashed.path(), &["simulate", "--n", "6", "--seed", "42", "--abort-after-messages", "7"]);
    c.check(format!("first run should die, exited {}", out.status), !out.status.success());
    let partial = fs::read_to_string(crashed.path().join("events.jsonl")).unwrap_or_default();
    let posted = partial.matches("\"role\":\"user\"").count();
    c.check(format!("{posted} user messages persisted before the crash"), posted == 7);

    let out = selfclone(crashed.path(), &["simulate", "--n", "6", "--seed", "42"]);
    c.check(format!("resumed run exited {}", out.status), out.status.success());
    c.check("exported rows identical", export(crashed.path()) == export(reference.path()));
    c.finish(None);
}
