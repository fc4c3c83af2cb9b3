//! Normality tests, the Wilcoxon rank-sum test with its shift estimate and
//! confidence interval, and the score-table comparisons built on them.

pub mod hypothesis;
pub mod normality;
pub mod rank_sum;

pub use hypothesis::{
    histogram, histogram_csv, qq_csv, qq_points, run_hypothesis1, run_hypothesis2, HypothesisConfig, HypothesisReport,
};
pub use normality::{anderson_darling_normal, normality_report, shapiro_wilk, AdTable, NormalityReport};
pub use rank_sum::{hodges_lehmann, wilcoxon_rank_sum, Alternative, HypothesisTestResult, PValueMethod};
