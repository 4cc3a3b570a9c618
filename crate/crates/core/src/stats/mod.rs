//! Evaluation mathematics: regression metrics, rank statistics, t-tests,
//! the Wilcoxon rank-sum test and Holm's step-down correction.

mod descriptive;
mod holm;
mod metrics;
mod report;
pub mod special;
mod ttest;
mod wilcoxon;

use serde::{Deserialize, Serialize};

pub use descriptive::{mean, mean_ci95, median, percentile, sample_variance, population_variance};
pub use holm::holm_correct;
pub use metrics::{average_ranks, pearson, r2, rmse, spearman};
pub use report::{rank_report, summarize, GroupSummary, PairwiseComparison, RankReport, RankGroup};
pub use ttest::{one_sample_t, welch_t};
pub use wilcoxon::{wilcoxon_rank_sum, EXACT_MAX_TOTAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    TwoSided,
    /// First sample tends to be greater.
    Greater,
    /// First sample tends to be smaller.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    NormalApprox,
    StudentT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub method: Method,
    pub alternative: Alternative,
    /// Degrees of freedom for t-tests.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub df: Option<f64>,
}
