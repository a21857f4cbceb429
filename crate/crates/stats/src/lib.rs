//! Numerical routines behind the cohort analysis: descriptive moments,
//! Hartigan's dip test, a two-component Gaussian mixture, rank and
//! parametric hypothesis tests, Holm-Bonferroni correction, Pearson
//! matrices and OLS regression.
//!
//! Everything here is a pure function of its inputs (and an explicit seed
//! where randomness is involved).

pub mod correlation;
pub mod descriptive;
pub mod dip;
pub mod dist;
pub mod error;
pub mod gmm;
pub mod holm;
pub mod hypothesis;
pub mod ols;
pub mod rank;

pub use correlation::{pearson, pearson_matrix, spearman, Correlation, CorrelationMatrix};
pub use descriptive::{descriptives, Descriptives, Sample};
pub use dip::{dip_statistic, dip_test, DipResult};
pub use error::{Result, StatsError};
pub use gmm::{fit_gmm2, Gmm2Fit, GmmOptions};
pub use holm::{holm_bonferroni, HolmResult};
pub use hypothesis::{anova_oneway, paired_t, Anova, PairedT};
pub use ols::{ols_regress, Coefficient, OlsFit};
pub use rank::{mann_whitney_u, MannWhitney};
