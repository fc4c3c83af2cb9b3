//! Wilcoxon rank-sum (Mann-Whitney) test, Hodges-Lehmann shift estimate and
//! the confidence interval obtained by inverting the test.
//!
//! The reported statistic is `U` of the first sample: the number of pairs
//! with `x > y`, ties counting one half.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use super::normality::std_normal;
use crate::error::{Error, Result};

/// Largest combined size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// The first sample tends to be smaller.
    Less,
    /// The first sample tends to be larger.
    Greater,
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alternative::TwoSided => "two_sided",
            Alternative::Less => "less",
            Alternative::Greater => "greater",
        })
    }
}

impl FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "two_sided" => Ok(Alternative::TwoSided),
            "less" => Ok(Alternative::Less),
            "greater" => Ok(Alternative::Greater),
            other => Err(Error::Config(format!("unknown alternative '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    /// Normal approximation with tie and continuity corrections.
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisTestResult {
    pub test_name: String,
    pub alternative: Alternative,
    pub method: PValueMethod,
    /// Mann-Whitney U of the first sample.
    pub statistic: f64,
    /// Rank sum of the first sample (midranks).
    pub rank_sum: f64,
    /// Standardized U without continuity correction.
    pub z: f64,
    pub p_value: f64,
    pub alpha: f64,
    /// Confidence level of the interval, e.g. 0.99.
    pub ci_level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Hodges-Lehmann median of `x_i − y_j`.
    pub point_estimate: f64,
    pub median_x: f64,
    pub median_y: f64,
    /// `|z| / √(n1 + n2)`.
    pub effect_size: Option<f64>,
    pub reject_null: bool,
    pub n1: usize,
    pub n2: usize,
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Ascending pairwise differences `x_i − y_j`.
fn sorted_differences(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = x.iter().flat_map(|a| y.iter().map(move |b| a - b)).collect();
    d.sort_by(f64::total_cmp);
    d
}

pub fn hodges_lehmann(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Contract("Hodges-Lehmann needs two non-empty samples".into()));
    }
    Ok(median(&sorted_differences(x, y)))
}

/// Midranks of the pooled sample and the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = pooled.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; n];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Null frequencies of U for sizes (n1, n2): `counts[u]` arrangements give U = u.
pub fn exact_u_counts(n1: usize, n2: usize) -> Vec<f64> {
    // f[i][j] = distribution for sizes (i, j); built with
    // f(i, j, u) = f(i-1, j, u-j) + f(i, j-1, u)
    let mut table: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); n2 + 1]; n1 + 1];
    for i in 0..=n1 {
        for j in 0..=n2 {
            let mut dist = vec![0.0; i * j + 1];
            if i == 0 || j == 0 {
                dist[0] = 1.0;
            } else {
                for (u, slot) in dist.iter_mut().enumerate() {
                    let mut v = 0.0;
                    if u >= j {
                        v += table[i - 1][j].get(u - j).copied().unwrap_or(0.0);
                    }
                    v += table[i][j - 1].get(u).copied().unwrap_or(0.0);
                    *slot = v;
                }
            }
            table[i][j] = dist;
        }
    }
    std::mem::take(&mut table[n1][n2])
}

/// Lower and upper tail probabilities of the null distribution of U.
struct NullDistribution {
    method: PValueMethod,
    n1: usize,
    n2: usize,
    /// Exact: cumulative P(U ≤ u) for integer u.
    cdf: Vec<f64>,
    mu: f64,
    sigma: f64,
}

impl NullDistribution {
    fn p_less(&self, u: f64) -> f64 {
        match self.method {
            PValueMethod::Exact => {
                let k = u.floor();
                if k < 0.0 {
                    0.0
                } else {
                    self.cdf[(k as usize).min(self.cdf.len() - 1)]
                }
            }
            PValueMethod::Normal => std_normal().cdf((u - self.mu + 0.5) / self.sigma),
        }
    }

    fn p_greater(&self, u: f64) -> f64 {
        match self.method {
            PValueMethod::Exact => {
                let k = u.ceil();
                let m = (self.n1 * self.n2) as f64;
                if k > m {
                    0.0
                } else if k <= 0.0 {
                    1.0
                } else {
                    1.0 - self.cdf[k as usize - 1]
                }
            }
            PValueMethod::Normal => std_normal().sf((u - self.mu - 0.5) / self.sigma),
        }
    }

    fn p_value(&self, u: f64, alternative: Alternative) -> f64 {
        let p = match alternative {
            Alternative::Less => self.p_less(u),
            Alternative::Greater => self.p_greater(u),
            Alternative::TwoSided => 2.0 * self.p_less(u).min(self.p_greater(u)),
        };
        p.clamp(0.0, 1.0)
    }
}

/// Wilcoxon rank-sum test of `x` against `y`.
///
/// `alpha` decides `reject_null`; the interval has confidence `1 − ci_alpha`
/// and is one-sided for one-sided alternatives.
pub fn wilcoxon_rank_sum(
    x: &[f64],
    y: &[f64],
    alternative: Alternative,
    alpha: f64,
    ci_alpha: f64,
) -> Result<HypothesisTestResult> {
    let (n1, n2) = (x.len(), y.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::Contract("rank-sum test needs two non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Contract("rank-sum samples must be finite".into()));
    }
    for a in [alpha, ci_alpha] {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Config(format!("significance level must lie in (0,1), got {a}")));
        }
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let n = (n1 + n2) as f64;
    let m = (n1 * n2) as f64;
    let rank_sum: f64 = ranks[..n1].iter().sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let mu = m / 2.0;
    let var = m / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return Err(Error::Statistics("both samples are constant and equal; the test is undefined".into()));
    }
    let sigma = var.sqrt();
    let has_ties = ties.iter().any(|&t| t > 1);
    let method = if n1 + n2 <= EXACT_MAX_N && !has_ties {
        PValueMethod::Exact
    } else {
        PValueMethod::Normal
    };
    let cdf = if method == PValueMethod::Exact {
        let counts = exact_u_counts(n1, n2);
        let total: f64 = counts.iter().sum();
        let mut acc = 0.0;
        counts
            .iter()
            .map(|c| {
                acc += c;
                acc / total
            })
            .collect()
    } else {
        Vec::new()
    };
    let null = NullDistribution {
        method,
        n1,
        n2,
        cdf,
        mu,
        sigma,
    };
    let p_value = null.p_value(u, alternative);
    let z = (u - mu) / sigma;

    let d = sorted_differences(x, y);
    let big_m = d.len();
    // d_(k) with 1-based k; out-of-range indices map to ∓∞
    let order_stat = |k: i64| -> f64 {
        if k < 1 {
            f64::NEG_INFINITY
        } else if k as usize > big_m {
            f64::INFINITY
        } else {
            d[k as usize - 1]
        }
    };
    // A shift δ is retained while the test of x − δ against y does not reject;
    // with continuous data U(δ) = #{d > δ}.
    let accepted: Vec<bool> = (0..=big_m).map(|k| null.p_value(k as f64, alternative) >= ci_alpha).collect();
    let lo_u = accepted.iter().position(|&a| a);
    let hi_u = accepted.iter().rposition(|&a| a);
    let (ci_low, ci_high) = match (lo_u, hi_u) {
        (Some(lo), Some(hi)) => {
            let (lo, hi) = (lo as i64, hi as i64);
            let mm = big_m as i64;
            match alternative {
                Alternative::Less => (f64::NEG_INFINITY, order_stat(mm - lo + 1)),
                Alternative::Greater => (order_stat(mm - hi), f64::INFINITY),
                Alternative::TwoSided => (order_stat(mm - hi), order_stat(mm - lo + 1)),
            }
        }
        _ => (f64::NAN, f64::NAN),
    };
    Ok(HypothesisTestResult {
        test_name: "wilcoxon_rank_sum".into(),
        alternative,
        method,
        statistic: u,
        rank_sum,
        z,
        p_value,
        alpha,
        ci_level: 1.0 - ci_alpha,
        ci_low,
        ci_high,
        point_estimate: median(&d),
        median_x: median(x),
        median_y: median(y),
        effect_size: Some((z.abs() / n.sqrt()).min(1.0)),
        reject_null: p_value < alpha,
        n1,
        n2,
    })
}

/// `P(U = u)` under the exact null; 0 when the normal approximation applies.
pub fn exact_point_probability(x: &[f64], y: &[f64]) -> f64 {
    let (n1, n2) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, _) = midranks(&pooled);
    let u = ranks[..n1].iter().sum::<f64>() - (n1 * (n1 + 1)) as f64 / 2.0;
    let counts = exact_u_counts(n1, n2);
    let total: f64 = counts.iter().sum();
    let k = u.round() as usize;
    if (u - k as f64).abs() > 1e-9 || k >= counts.len() {
        return 0.0;
    }
    counts[k] / total
}
