//! The two score-table comparisons: user-dependent against user-independent
//! models, and chest against wrist sensors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use super::normality::{normality_report, std_normal, AdTable, NormalityReport};
use super::rank_sum::{wilcoxon_rank_sum, Alternative, HypothesisTestResult};
use crate::error::{Error, Result};
use crate::protocol::BAScore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConfig {
    pub alternative: Alternative,
    pub alpha: f64,
    /// One minus the interval's confidence level.
    pub ci_alpha: f64,
    pub ad_table: AdTable,
    /// Expected (group 1, group 2) sizes; a mismatch is an audit error.
    pub expected_sizes: Option<(usize, usize)>,
}

impl HypothesisConfig {
    /// One-sided test at 0.001 with a 99% interval.
    pub fn user_dependence() -> Self {
        HypothesisConfig {
            alternative: Alternative::Less,
            alpha: 0.001,
            ci_alpha: 0.01,
            ad_table: AdTable::default(),
            expected_sizes: None,
        }
    }

    /// Two-sided test at 0.05 with a 95% interval.
    pub fn sensor_placement() -> Self {
        HypothesisConfig {
            alternative: Alternative::TwoSided,
            alpha: 0.05,
            ci_alpha: 0.05,
            ad_table: AdTable::default(),
            expected_sizes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub theoretical_q: f64,
    pub sample_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Absent when the sample is too small or constant.
    pub normality: Option<NormalityReport>,
    pub qq: Vec<QqPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub hypothesis: u8,
    pub null_hypothesis: String,
    pub alternative_hypothesis: String,
    pub group1: GroupSummary,
    pub group2: GroupSummary,
    /// Differences `group1 − group2` over cells present in both groups.
    pub paired_differences: Vec<f64>,
    pub paired_difference_normality: Option<NormalityReport>,
    pub difference_histogram: Vec<HistogramBin>,
    pub test: HypothesisTestResult,
    pub decision: String,
}

/// Blom plotting positions against the sorted sample.
pub fn qq_points(sample: &[f64]) -> Vec<QqPoint> {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let norm = std_normal();
    s.iter()
        .enumerate()
        .map(|(i, &v)| QqPoint {
            theoretical_q: norm.inverse_cdf((i as f64 + 1.0 - 0.375) / (n + 0.25)),
            sample_q: v,
        })
        .collect()
}

/// Equal-width bins over `[min, max]`; `ceil(log2 n) + 1` bins by default.
pub fn histogram(sample: &[f64], bins: Option<usize>) -> Vec<HistogramBin> {
    if sample.is_empty() {
        return Vec::new();
    }
    let n = sample.len();
    let k = bins.unwrap_or_else(|| (n as f64).log2().ceil() as usize + 1).max(1);
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / k as f64;
    let mut counts = vec![0usize; k];
    for &v in sample {
        let idx = (((v - lo) / width) as usize).min(k - 1);
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            bin_left: lo + i as f64 * width,
            bin_right: if i + 1 == k { hi } else { lo + (i + 1) as f64 * width },
            count,
        })
        .collect()
}

fn summarize(label: &str, values: &[f64], table: AdTable) -> GroupSummary {
    let normality = normality_report(values, table)
        .map_err(|e| log::info!("normality of {label} not assessed: {e}"))
        .ok();
    GroupSummary {
        label: label.to_string(),
        n: values.len(),
        median: super::rank_sum::median(values),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        normality,
        qq: qq_points(values),
    }
}

/// Differences over (subject, family) cells scored in both groups.
fn paired_differences(a: &[BAScore], b: &[BAScore]) -> Vec<f64> {
    let index: BTreeMap<(&str, _), f64> = b
        .iter()
        .map(|s| ((s.subject_id.as_str(), s.family), s.balanced_accuracy))
        .collect();
    let mut left: Vec<&BAScore> = a.iter().collect();
    left.sort_by(|x, y| (&x.subject_id, x.family).cmp(&(&y.subject_id, y.family)));
    left.iter()
        .filter_map(|s| index.get(&(s.subject_id.as_str(), s.family)).map(|v| s.balanced_accuracy - v))
        .collect()
}

fn compare(
    hypothesis: u8,
    labels: (&str, &str),
    hypotheses: (&str, &str),
    g1: &[BAScore],
    g2: &[BAScore],
    config: &HypothesisConfig,
) -> Result<HypothesisReport> {
    if let Some((e1, e2)) = config.expected_sizes {
        if (g1.len(), g2.len()) != (e1, e2) {
            return Err(Error::Audit(format!(
                "group sizes ({}, {}) do not match the expected ({e1}, {e2})",
                g1.len(),
                g2.len()
            )));
        }
    }
    let v1: Vec<f64> = g1.iter().map(|s| s.balanced_accuracy).collect();
    let v2: Vec<f64> = g2.iter().map(|s| s.balanced_accuracy).collect();
    let test = wilcoxon_rank_sum(&v1, &v2, config.alternative, config.alpha, config.ci_alpha)?;
    let diffs = paired_differences(g1, g2);
    let paired_difference_normality = normality_report(&diffs, config.ad_table).ok();
    let decision = if test.reject_null {
        format!("reject H0 at alpha = {} (p = {:.4e})", config.alpha, test.p_value)
    } else {
        format!("fail to reject H0 at alpha = {} (p = {:.4e})", config.alpha, test.p_value)
    };
    Ok(HypothesisReport {
        hypothesis,
        null_hypothesis: hypotheses.0.to_string(),
        alternative_hypothesis: hypotheses.1.to_string(),
        group1: summarize(labels.0, &v1, config.ad_table),
        group2: summarize(labels.1, &v2, config.ad_table),
        difference_histogram: histogram(&diffs, None),
        paired_differences: diffs,
        paired_difference_normality,
        test,
        decision,
    })
}

/// Rank-sum comparison with the user-independent scores as the first sample,
/// so the default `less` alternative states that user-dependent models score
/// higher.
pub fn run_hypothesis1(ba_ud: &[BAScore], ba_ui: &[BAScore], config: &HypothesisConfig) -> Result<HypothesisReport> {
    compare(
        1,
        ("user_independent", "user_dependent"),
        (
            "median BA of user-dependent and user-independent models are equal",
            "median BA of user-dependent models is greater",
        ),
        ba_ui,
        ba_ud,
        config,
    )
}

/// Two-sided rank-sum comparison of chest-sensor against wrist-sensor scores.
pub fn run_hypothesis2(
    ba_chest: &[BAScore],
    ba_wrist: &[BAScore],
    config: &HypothesisConfig,
) -> Result<HypothesisReport> {
    compare(
        2,
        ("chest", "wrist"),
        (
            "median BA of chest and wrist sensors are equal",
            "median BA of chest and wrist sensors differ",
        ),
        ba_chest,
        ba_wrist,
        config,
    )
}

/// Plot-ready CSV text: `theoretical_q,sample_q`.
pub fn qq_csv(points: &[QqPoint]) -> String {
    let mut s = String::from("theoretical_q,sample_q\n");
    for p in points {
        s.push_str(&format!(
            "{},{}\n",
            crate::ingest::format_sig12(p.theoretical_q),
            crate::ingest::format_sig12(p.sample_q)
        ));
    }
    s
}

/// Plot-ready CSV text: `bin_left,bin_right,count`.
pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut s = String::from("bin_left,bin_right,count\n");
    for b in bins {
        s.push_str(&format!(
            "{},{},{}\n",
            crate::ingest::format_sig12(b.bin_left),
            crate::ingest::format_sig12(b.bin_right),
            b.count
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Family;
    use crate::protocol::Protocol;

    fn scores(values: &[f64], protocol: Protocol) -> Vec<BAScore> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| BAScore {
                dataset: "d".into(),
                subject_id: format!("S{:02}", i / 5),
                family: Family::ALL[i % 5],
                protocol,
                balanced_accuracy: v,
            })
            .collect()
    }

    #[test]
    fn equal_groups_fail_to_reject() {
        let v: Vec<f64> = (0..20).map(|i| 0.6 + 0.017 * (i * 7 % 20) as f64).collect();
        let ud = scores(&v, Protocol::UserDependent);
        let ui = scores(&v, Protocol::UserIndependent);
        let r = run_hypothesis1(&ud, &ui, &HypothesisConfig::user_dependence()).unwrap();
        assert!(!r.test.reject_null);
        assert_eq!(r.test.point_estimate, 0.0);
        assert!(r.decision.starts_with("fail to reject"));
        assert_eq!(r.paired_differences, vec![0.0; 20]);
        assert!(r.paired_difference_normality.is_none());
        assert_eq!(r.group1.qq.len(), 20);
    }

    #[test]
    fn separated_groups_reject_with_negative_shift() {
        let ud: Vec<f64> = (0..30).map(|i| 0.85 + 0.004 * i as f64).collect();
        let ui: Vec<f64> = (0..30).map(|i| 0.55 + 0.006 * i as f64).collect();
        let r = run_hypothesis1(
            &scores(&ud, Protocol::UserDependent),
            &scores(&ui, Protocol::UserIndependent),
            &HypothesisConfig::user_dependence(),
        )
        .unwrap();
        assert!(r.test.reject_null);
        assert!(r.test.point_estimate < 0.0);
        assert_eq!(r.test.ci_low, f64::NEG_INFINITY);
        assert!(r.test.ci_high < 0.0);
        assert_eq!(r.group1.label, "user_independent");
    }

    #[test]
    fn audit_rejects_unexpected_sizes() {
        let v = [0.5, 0.6, 0.7];
        let mut cfg = HypothesisConfig::sensor_placement();
        cfg.expected_sizes = Some((75, 75));
        let a = scores(&v, Protocol::UserDependent);
        assert!(matches!(run_hypothesis2(&a, &a, &cfg), Err(Error::Audit(_))));
    }

    #[test]
    fn histogram_counts_everything() {
        let v: Vec<f64> = (0..37).map(|i| (i as f64 * 0.37).sin()).collect();
        let h = histogram(&v, None);
        assert_eq!(h.len(), 7);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 37);
        assert!(histogram_csv(&h).starts_with("bin_left,bin_right,count\n"));
        assert_eq!(histogram(&[2.0, 2.0], Some(3)).iter().map(|b| b.count).sum::<usize>(), 2);
    }
}
