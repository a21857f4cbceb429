//! The full analysis battery over an exported cohort.
//!
//! Primary-wave rows feed every test except the follow-up comparison.
//! Engagement is the TWEETS total and its two subscales; the headline
//! comparison pits baseline rows against high-believability rows of the two
//! self-clone conditions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetRow;
use crate::prompt::template_fixture_hash;
use crate::session::{Condition, Wave};
use crate::stats::{
    anova_oneway, descriptives, dip_test, fit_gmm2, holm_bonferroni, mann_whitney_u, ols_regress, paired_t,
    pearson_matrix, spearman, Anova, CorrelationMatrix, Correlation, Descriptives, DipResult, Gmm2Fit, GmmOptions,
    MannWhitney, OlsFit, PairedT, StatsError,
};

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{test}: group {group} is too small")]
    InsufficientGroupSize { test: String, group: String },
    #[error("{test}: {source}")]
    Stats { test: String, source: StatsError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub seed: u64,
    pub dip_bootstraps: usize,
    pub gmm_restarts: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { seed: 42, dip_bootstraps: crate::stats::dip::DEFAULT_BOOTSTRAPS, gmm_restarts: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureByCondition {
    pub measure: String,
    pub condition: Condition,
    pub n: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BelievabilitySection {
    pub n: usize,
    pub descriptives: Descriptives,
    pub dip: DipResult,
    /// `None` with a reason when every mixture restart collapsed.
    pub gmm: Option<Gmm2Fit>,
    pub gmm_note: Option<String>,
    pub high: usize,
    pub low: usize,
    pub high_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaLine {
    pub measure: String,
    pub groups: Vec<GroupSummary>,
    pub anova: Anova,
    /// Filled when the line belongs to a Holm-corrected family.
    pub holm_adjusted_p: Option<f64>,
    pub holm_threshold: Option<f64>,
    pub holm_reject: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowupSection {
    pub present: bool,
    pub pairs: usize,
    /// TWEETS total, primary against follow-up.
    pub paired_t: Option<PairedT>,
    /// Believability, primary against follow-up.
    pub mann_whitney: Option<MannWhitney>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub rows: usize,
    pub primary_rows: usize,
    pub followup_rows: usize,
    pub template_hash: String,
    pub descriptives: Vec<MeasureByCondition>,
    pub believability: BelievabilitySection,
    /// TWEETS total against believability, self-clone rows.
    pub engagement_believability: Correlation,
    /// BL against high-believability SCX and SCS, Holm-corrected.
    pub engagement_anova: Vec<AnovaLine>,
    /// Same measures by condition with believability pooled.
    pub pooled_anova: Vec<AnovaLine>,
    pub composite_anova: Vec<AnovaLine>,
    pub correlations_all: CorrelationMatrix,
    pub correlations_high: CorrelationMatrix,
    /// TWEETS total on AI literacy and attitude toward AI.
    pub regression: OlsFit,
    pub followup: FollowupSection,
}

type Measure = (&'static str, fn(&DatasetRow) -> f64);

const ENGAGEMENT: [Measure; 3] = [
    ("tweets_total", |r| r.tweets_total),
    ("tweets_cognitive", |r| r.tweets_cognitive),
    ("tweets_emotional", |r| r.tweets_emotional),
];

const DESCRIBED: [Measure; 9] = [
    ("tweets_total", |r| r.tweets_total),
    ("tweets_cognitive", |r| r.tweets_cognitive),
    ("tweets_emotional", |r| r.tweets_emotional),
    ("ues_total", |r| r.ues_total),
    ("main_messages", |r| r.main_messages as f64),
    ("main_words_per_message", |r| r.main_words_per_message),
    ("main_mean_seconds_per_turn", |r| r.main_mean_seconds_per_turn),
    ("main_median_seconds_per_turn", |r| r.main_median_seconds_per_turn),
    ("main_duration_seconds", |r| r.main_duration_seconds),
];

const MATRIX: [&str; 11] = [
    "tweets_total",
    "tweets_cognitive",
    "tweets_emotional",
    "ues_total",
    "motivation_z",
    "acceptance_z",
    "ails_total",
    "aiais_total",
    "distress_total",
    "main_messages",
    "main_words_per_message",
];

fn matrix_value(r: &DatasetRow, col: &str) -> Option<f64> {
    Some(match col {
        "tweets_total" => r.tweets_total,
        "tweets_cognitive" => r.tweets_cognitive,
        "tweets_emotional" => r.tweets_emotional,
        "ues_total" => r.ues_total,
        "motivation_z" => r.motivation_z?,
        "acceptance_z" => r.acceptance_z?,
        "ails_total" => r.ails_total,
        "aiais_total" => r.aiais_total,
        "distress_total" => r.distress_total,
        "main_messages" => r.main_messages as f64,
        "main_words_per_message" => r.main_words_per_message,
        _ => unreachable!("unknown matrix column {col}"),
    })
}

fn stats<T>(test: &str, r: Result<T, StatsError>) -> Result<T, ReportError> {
    r.map_err(|source| ReportError::Stats { test: test.into(), source })
}

pub fn build_report(rows: &[DatasetRow], opts: &ReportOptions) -> Result<AnalysisReport, ReportError> {
    let primary: Vec<&DatasetRow> = rows.iter().filter(|r| r.wave == Wave::Primary).collect();
    let followup: Vec<&DatasetRow> = rows.iter().filter(|r| r.wave == Wave::Followup).collect();
    if primary.is_empty() {
        return Err(ReportError::Schema("no primary-wave rows".into()));
    }
    for r in rows {
        if r.condition.is_self_clone() != r.believability.is_some() {
            return Err(ReportError::Schema(format!(
                "{} ({}): believability must be present exactly for self-clone rows",
                r.participant_id, r.condition
            )));
        }
    }

    let descriptives = condition_descriptives(&primary);
    let believability = believability_section(&primary, opts)?;

    let clones: Vec<&DatasetRow> = primary.iter().copied().filter(|r| r.condition.is_self_clone()).collect();
    let engagement_believability = stats(
        "spearman engagement~believability",
        spearman(
            &clones.iter().map(|r| r.tweets_total).collect::<Vec<_>>(),
            &clones.iter().map(|r| r.believability.unwrap() as f64).collect::<Vec<_>>(),
        ),
    )?;

    let high_groups = || -> Vec<(String, Vec<&DatasetRow>)> {
        vec![
            ("BL".into(), by_condition(&primary, Condition::BL)),
            ("SCX-high".into(), by_condition(&primary, Condition::SCX).into_iter().filter(|r| r.is_high_believability()).collect()),
            ("SCS-high".into(), by_condition(&primary, Condition::SCS).into_iter().filter(|r| r.is_high_believability()).collect()),
        ]
    };
    let pooled_groups =
        || -> Vec<(String, Vec<&DatasetRow>)> { Condition::ALL.iter().map(|&c| (c.to_string(), by_condition(&primary, c))).collect() };

    let mut engagement_anova = ENGAGEMENT
        .iter()
        .map(|(name, f)| anova_line(name, &high_groups(), |r| Some(f(r))))
        .collect::<Result<Vec<_>, _>>()?;
    let holm = stats("holm", holm_bonferroni(&engagement_anova.iter().map(|l| l.anova.p).collect::<Vec<_>>(), ALPHA))?;
    for (i, line) in engagement_anova.iter_mut().enumerate() {
        line.holm_adjusted_p = Some(holm.adjusted[i]);
        line.holm_threshold = Some(holm.thresholds[i]);
        line.holm_reject = Some(holm.reject[i]);
    }
    let pooled_anova = ENGAGEMENT
        .iter()
        .map(|(name, f)| anova_line(name, &pooled_groups(), |r| Some(f(r))))
        .collect::<Result<Vec<_>, _>>()?;
    let composite_anova = vec![
        anova_line("motivation_z", &high_groups(), |r| r.motivation_z)?,
        anova_line("acceptance_z", &high_groups(), |r| r.acceptance_z)?,
    ];

    let correlations_all = correlation_matrix("pearson matrix (all rows)", &primary)?;
    let high_subset: Vec<&DatasetRow> =
        primary.iter().copied().filter(|r| r.condition == Condition::BL || r.is_high_believability()).collect();
    let correlations_high = correlation_matrix("pearson matrix (BL + high believability)", &high_subset)?;

    let regression = stats(
        "ols engagement ~ ai literacy + attitude",
        ols_regress(
            &[
                ("ails_total".into(), primary.iter().map(|r| r.ails_total).collect()),
                ("aiais_total".into(), primary.iter().map(|r| r.aiais_total).collect()),
            ],
            &primary.iter().map(|r| r.tweets_total).collect::<Vec<_>>(),
        ),
    )?;

    let followup_section = followup_section(&primary, &followup)?;

    Ok(AnalysisReport {
        rows: rows.len(),
        primary_rows: primary.len(),
        followup_rows: followup.len(),
        template_hash: template_fixture_hash(),
        descriptives,
        believability,
        engagement_believability,
        engagement_anova,
        pooled_anova,
        composite_anova,
        correlations_all,
        correlations_high,
        regression,
        followup: followup_section,
    })
}

fn by_condition<'a>(rows: &[&'a DatasetRow], c: Condition) -> Vec<&'a DatasetRow> {
    rows.iter().copied().filter(|r| r.condition == c).collect()
}

fn condition_descriptives(primary: &[&DatasetRow]) -> Vec<MeasureByCondition> {
    let mut out = Vec::new();
    for (name, f) in DESCRIBED {
        for c in Condition::ALL {
            let values: Vec<f64> = by_condition(primary, c).into_iter().map(f).collect();
            if values.is_empty() {
                continue;
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let sd = (values.len() >= 2).then(|| crate::stats::descriptive::std_dev(&values));
            out.push(MeasureByCondition { measure: name.into(), condition: c, n: values.len(), mean, sd });
        }
    }
    out
}

fn believability_section(primary: &[&DatasetRow], opts: &ReportOptions) -> Result<BelievabilitySection, ReportError> {
    let values: Vec<f64> = primary.iter().filter_map(|r| r.believability).map(|b| b as f64).collect();
    if values.len() < 6 {
        return Err(ReportError::InsufficientGroupSize { test: "believability dip/gmm".into(), group: "self-clone".into() });
    }
    let described = stats("believability descriptives", descriptives(&values))?;
    let dip = stats("dip test", dip_test(&values, opts.dip_bootstraps, opts.seed))?;
    let gmm_opts = GmmOptions { restarts: opts.gmm_restarts, seed: opts.seed, ..GmmOptions::default() };
    let (gmm, gmm_note) = match fit_gmm2(&values, &gmm_opts) {
        Ok(fit) => {
            let note = (!fit.separated).then(|| "components not separated; threshold is not a bimodal split".to_string());
            (Some(fit), note)
        }
        Err(e) => (None, Some(e.to_string())),
    };
    let high = primary.iter().filter(|r| r.is_high_believability()).count();
    Ok(BelievabilitySection {
        n: values.len(),
        descriptives: described,
        dip,
        gmm,
        gmm_note,
        high,
        low: values.len() - high,
        high_share: high as f64 / values.len() as f64,
    })
}

fn anova_line(
    measure: &str,
    groups: &[(String, Vec<&DatasetRow>)],
    value: impl Fn(&DatasetRow) -> Option<f64>,
) -> Result<AnovaLine, ReportError> {
    let test = format!("anova {measure}");
    let mut samples = Vec::new();
    let mut summaries = Vec::new();
    for (label, rows) in groups {
        let values: Vec<f64> = rows
            .iter()
            .map(|r| value(r).ok_or_else(|| ReportError::Schema(format!("{}: {measure} missing", r.participant_id))))
            .collect::<Result<_, _>>()?;
        if values.len() < 2 {
            return Err(ReportError::InsufficientGroupSize { test, group: label.clone() });
        }
        summaries.push(GroupSummary {
            label: label.clone(),
            n: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
        });
        samples.push(values);
    }
    let refs: Vec<&[f64]> = samples.iter().map(Vec::as_slice).collect();
    let anova = stats(&test, anova_oneway(&refs))?;
    Ok(AnovaLine {
        measure: measure.into(),
        groups: summaries,
        anova,
        holm_adjusted_p: None,
        holm_threshold: None,
        holm_reject: None,
    })
}

fn correlation_matrix(test: &str, rows: &[&DatasetRow]) -> Result<CorrelationMatrix, ReportError> {
    let columns = MATRIX
        .iter()
        .map(|&col| {
            let values = rows
                .iter()
                .map(|r| matrix_value(r, col).ok_or_else(|| ReportError::Schema(format!("{}: {col} missing", r.participant_id))))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((col.to_string(), values))
        })
        .collect::<Result<Vec<_>, ReportError>>()?;
    stats(test, pearson_matrix(&columns))
}

fn followup_section(primary: &[&DatasetRow], followup: &[&DatasetRow]) -> Result<FollowupSection, ReportError> {
    if followup.is_empty() {
        return Ok(FollowupSection { present: false, pairs: 0, paired_t: None, mann_whitney: None });
    }
    let pairs: Vec<(&DatasetRow, &DatasetRow)> = followup
        .iter()
        .filter_map(|f| primary.iter().find(|p| p.participant_id == f.participant_id).map(|p| (*p, *f)))
        .collect();
    if pairs.len() < 2 {
        return Err(ReportError::InsufficientGroupSize { test: "follow-up paired t".into(), group: "follow-up".into() });
    }
    let before: Vec<f64> = pairs.iter().map(|(p, _)| p.tweets_total).collect();
    let after: Vec<f64> = pairs.iter().map(|(_, f)| f.tweets_total).collect();
    let t = stats("follow-up paired t", paired_t(&before, &after))?;
    let b_primary: Vec<f64> = pairs.iter().filter_map(|(p, _)| p.believability).map(|b| b as f64).collect();
    let b_followup: Vec<f64> = pairs.iter().filter_map(|(_, f)| f.believability).map(|b| b as f64).collect();
    let u = stats("follow-up mann-whitney", mann_whitney_u(&b_primary, &b_followup))?;
    Ok(FollowupSection { present: true, pairs: pairs.len(), paired_t: Some(t), mann_whitney: Some(u) })
}

/// `p<.001` or `p=.015`, leading zero dropped.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "p<.001".into()
    } else {
        let s = format!("{p:.3}");
        format!("p={}", s.strip_prefix('0').unwrap_or(&s))
    }
}

pub fn format_anova(a: &Anova) -> String {
    format!("F({},{})={:.3}, {}", a.df_between, a.df_within, a.f, format_p(a.p))
}

impl AnalysisReport {
    /// Plain-text summary in the usual reporting style.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let b = &self.believability;
        let _ = writeln!(s, "Rows: {} primary, {} follow-up", self.primary_rows, self.followup_rows);
        let _ = writeln!(
            s,
            "Believability (n={}): M={:.3}, SD={:.3}, skewness={}, kurtosis={}",
            b.n,
            b.descriptives.mean,
            b.descriptives.sd,
            opt3(b.descriptives.skewness),
            opt3(b.descriptives.kurtosis)
        );
        let _ = writeln!(s, "Dip test: D={:.4}, {} ({} bootstraps)", b.dip.dip, format_p(b.dip.p_value), b.dip.n_boot);
        match &b.gmm {
            Some(g) => {
                let _ = writeln!(
                    s,
                    "GMM: means {:.3}/{:.3}, weights {:.3}/{:.3}, threshold={:.2}",
                    g.means[0], g.means[1], g.weights[0], g.weights[1], g.threshold
                );
            }
            None => {
                let _ = writeln!(s, "GMM: not fitted ({})", b.gmm_note.as_deref().unwrap_or("unknown"));
            }
        }
        let _ = writeln!(s, "High believability: {}/{} ({:.2}%)", b.high, b.n, 100.0 * b.high_share);
        let c = &self.engagement_believability;
        let _ = writeln!(s, "Engagement~believability: r_s={:.3}, {}, N={}", c.r, format_p(c.p), c.n);
        let _ = writeln!(s, "Engagement by condition (BL vs high-believability clones), Holm-corrected:");
        for l in &self.engagement_anova {
            let _ = writeln!(
                s,
                "  {}: {}, p_adj={:.3}, threshold={:.4}{}",
                l.measure,
                format_anova(&l.anova),
                l.holm_adjusted_p.unwrap(),
                l.holm_threshold.unwrap(),
                if l.holm_reject.unwrap() { " *" } else { "" }
            );
        }
        let _ = writeln!(s, "Engagement by condition, believability pooled:");
        for l in &self.pooled_anova {
            let _ = writeln!(s, "  {}: {}", l.measure, format_anova(&l.anova));
        }
        let _ = writeln!(s, "Composites:");
        for l in &self.composite_anova {
            let _ = writeln!(s, "  {}: {}", l.measure, format_anova(&l.anova));
        }
        let r = &self.regression;
        let _ = writeln!(
            s,
            "Regression tweets_total ~ ails_total + aiais_total: F({}, {})={:.2}, {}, R2={:.3}",
            r.df_model,
            r.df_residual,
            r.f,
            format_p(r.p),
            r.r2
        );
        for coef in &r.coefficients {
            let _ = writeln!(
                s,
                "  {}: b={:.3}, 95% CI [{:.3}, {:.3}], {}",
                coef.name,
                coef.estimate,
                coef.ci95.0,
                coef.ci95.1,
                format_p(coef.p)
            );
        }
        let f = &self.followup;
        if f.present {
            let t = f.paired_t.as_ref().unwrap();
            let u = f.mann_whitney.as_ref().unwrap();
            let _ = writeln!(s, "Follow-up ({} pairs): t({})={:.3}, {}", f.pairs, t.df, t.t, format_p(t.p));
            let _ = writeln!(s, "  believability: U={:.2}, Z={:.2}, {}", u.u, u.z, format_p(u.p));
        } else {
            let _ = writeln!(s, "Follow-up: absent");
        }
        s
    }

    /// Every p-value in the report, labelled.
    pub fn p_values(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("dip".to_string(), self.believability.dip.p_value),
            ("spearman".to_string(), self.engagement_believability.p),
            ("regression".to_string(), self.regression.p),
        ];
        for (family, lines) in [
            ("anova", &self.engagement_anova),
            ("pooled", &self.pooled_anova),
            ("composite", &self.composite_anova),
        ] {
            for l in lines {
                out.push((format!("{family} {}", l.measure), l.anova.p));
                if let Some(p) = l.holm_adjusted_p {
                    out.push((format!("{family} {} holm", l.measure), p));
                }
            }
        }
        for c in &self.regression.coefficients {
            out.push((format!("regression {}", c.name), c.p));
        }
        for (label, m) in [("all", &self.correlations_all), ("high", &self.correlations_high)] {
            for (i, row) in m.cells.iter().enumerate() {
                for (j, cell) in row.iter().enumerate().skip(i + 1) {
                    out.push((format!("pearson {label} {}~{}", m.labels[i], m.labels[j]), cell.p));
                }
            }
        }
        if let Some(t) = &self.followup.paired_t {
            out.push(("follow-up paired t".into(), t.p));
        }
        if let Some(u) = &self.followup.mann_whitney {
            out.push(("follow-up mann-whitney".into(), u.p));
        }
        out
    }
}

fn opt3(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
}
