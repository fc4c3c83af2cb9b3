//! Shapiro-Wilk and Anderson-Darling normality tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub(crate) fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Shapiro-Wilk `(W, p)` using Royston's approximation of the order-statistic
/// weights and his normalizing transformation of `W`.
pub fn shapiro_wilk(sample: &[f64]) -> Result<(f64, f64)> {
    let n = sample.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::Statistics(format!("Shapiro-Wilk needs 3 to 5000 observations, got {n}")));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::Statistics("Shapiro-Wilk sample contains non-finite values".into()));
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if !(range > 1e-19 * x[n - 1].abs().max(1.0)) {
        return Err(Error::Statistics("W is undefined for a constant sample".into()));
    }

    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    let half = n / 2;
    let an = n as f64;
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let norm = std_normal();
        let m: Vec<f64> = (1..=half).map(|i| norm.inverse_cdf((i as f64 - 0.375) / (an + 0.25))).collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
            a[1] = a2;
            (2, fac)
        } else {
            (1, ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt())
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }

    // scale by the range for conditioning; W is scale-free
    let z: Vec<f64> = x.iter().map(|v| (v - x[0]) / range).collect();
    let mean = z.iter().sum::<f64>() / an;
    let ss: f64 = z.iter().map(|v| (v - mean).powi(2)).sum();
    let num: f64 = (0..half).map(|i| a[i] * (z[n - 1 - i] - z[i])).sum();
    let w = (num * num / ss).min(1.0);

    if n == 3 {
        let p = (6.0 / std::f64::consts::PI) * (w.sqrt().asin() - std::f64::consts::FRAC_PI_3);
        return Ok((w, p.clamp(0.0, 1.0)));
    }
    let y = (1.0 - w).ln();
    let (y, mu, sigma) = if n <= 11 {
        let gamma = poly(&[-2.273, 0.459], an);
        if y >= gamma {
            return Ok((w, 1e-99));
        }
        (
            -(gamma - y).ln(),
            poly(&[0.5440, -0.39978, 0.025054, -6.714e-4], an),
            poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp(),
        )
    } else {
        let ln_n = an.ln();
        (
            y,
            poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n),
            poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp(),
        )
    };
    let p = std_normal().sf((y - mu) / sigma);
    Ok((w, p))
}

/// Critical-value table used to judge the Anderson-Darling statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdTable {
    /// Estimated-parameters values divided by `1 + 4/n − 25/n²` and rounded to
    /// three decimals; compared against the raw A².
    #[default]
    SampleSizeAdjusted,
    /// Fixed asymptotic values compared against `A²·(1 + 0.75/n + 2.25/n²)`.
    Asymptotic,
}

pub const AD_SIGNIFICANCE_PERCENT: [f64; 5] = [15.0, 10.0, 5.0, 2.5, 1.0];
const AD_BASE: [f64; 5] = [0.576, 0.656, 0.787, 0.918, 1.092];
const AD_ASYMPTOTIC: [f64; 5] = [0.561, 0.631, 0.752, 0.873, 1.035];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AndersonDarling {
    /// Raw A² with mean and variance estimated from the sample.
    pub a2: f64,
    /// `A²·(1 + 0.75/n + 2.25/n²)`.
    pub a2_adjusted: f64,
    pub table: AdTable,
    /// Statistic that the table's critical values apply to.
    pub statistic: f64,
    /// Critical values at 15%, 10%, 5%, 2.5% and 1%.
    pub critical_values: [f64; 5],
}

impl AndersonDarling {
    pub fn critical_005(&self) -> f64 {
        self.critical_values[2]
    }
}

pub fn ad_critical_values(n: usize, table: AdTable) -> [f64; 5] {
    match table {
        AdTable::SampleSizeAdjusted => {
            let nf = n as f64;
            let div = 1.0 + 4.0 / nf - 25.0 / (nf * nf);
            AD_BASE.map(|v| (v / div * 1000.0).round() / 1000.0)
        }
        AdTable::Asymptotic => AD_ASYMPTOTIC,
    }
}

pub fn anderson_darling_normal(sample: &[f64], table: AdTable) -> Result<AndersonDarling> {
    let n = sample.len();
    if n < 8 {
        return Err(Error::Statistics(format!("Anderson-Darling needs at least 8 observations, got {n}")));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let sd = (sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Statistics("Anderson-Darling is undefined for a constant sample".into()));
    }
    let mut z: Vec<f64> = sample.iter().map(|v| (v - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let norm = std_normal();
    let s: f64 = (0..n)
        .map(|i| {
            let lo = norm.cdf(z[i]).ln();
            let hi = norm.sf(z[n - 1 - i]).ln();
            (2 * i + 1) as f64 * (lo + hi)
        })
        .sum();
    let a2 = -nf - s / nf;
    let a2_adjusted = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    Ok(AndersonDarling {
        a2,
        a2_adjusted,
        table,
        statistic: match table {
            AdTable::SampleSizeAdjusted => a2,
            AdTable::Asymptotic => a2_adjusted,
        },
        critical_values: ad_critical_values(n, table),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub n: usize,
    pub shapiro_w: f64,
    pub shapiro_p: f64,
    pub ad_statistic: f64,
    pub ad_a2: f64,
    pub ad_a2_adjusted: f64,
    pub ad_table: AdTable,
    pub ad_critical_values: [f64; 5],
    pub ad_critical_005: f64,
    /// Shapiro-Wilk p ≥ 0.05 and A² within its 5% critical value.
    pub normal_at_005: bool,
}

pub fn normality_report(sample: &[f64], table: AdTable) -> Result<NormalityReport> {
    let (w, p) = shapiro_wilk(sample)?;
    let ad = anderson_darling_normal(sample, table)?;
    Ok(NormalityReport {
        n: sample.len(),
        shapiro_w: w,
        shapiro_p: p,
        ad_statistic: ad.statistic,
        ad_a2: ad.a2,
        ad_a2_adjusted: ad.a2_adjusted,
        ad_table: table,
        ad_critical_values: ad.critical_values,
        ad_critical_005: ad.critical_005(),
        normal_at_005: p >= 0.05 && ad.statistic <= ad.critical_005(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn shapiro_reference_values() {
        let norm = std_normal();
        let q: Vec<f64> = (1..=20).map(|i| norm.inverse_cdf(i as f64 / 21.0)).collect();
        let (w, p) = shapiro_wilk(&q).unwrap();
        assert!((w - 0.993332938308796).abs() < 1e-6, "{w}");
        assert!((p - 0.9999007805039322).abs() < 1e-4, "{p}");

        let base = [0.0, 0.47, 1.68, 3.63, 6.32, 2.65, 6.82, 4.63, 3.18, 2.47, 2.5, 3.27];
        for (n, ew, ep) in [
            (3, 0.9392554465989261, 0.5243875299327453),
            (5, 0.9164055282509082, 0.5070221029419024),
            (8, 0.9461183050946651, 0.6720856686390501),
            (11, 0.9513230637131388, 0.6608998749035497),
            (12, 0.9519114227324413, 0.665076402505471),
        ] {
            let (w, p) = shapiro_wilk(&base[..n]).unwrap();
            assert!((w - ew).abs() < 1e-6, "n={n} w={w}");
            assert!((p - ep).abs() < 1e-4, "n={n} p={p}");
        }

        let x: Vec<f64> = (0..200).map(|i| (-3.0 + 6.0 * i as f64 / 199.0).exp()).collect();
        let (w, p) = shapiro_wilk(&x).unwrap();
        assert!((w - 0.712930239383146).abs() < 1e-6);
        assert!(close(p, 2.697990917591957e-18, 0.05), "{p}");
    }

    #[test]
    fn shapiro_rejects_constant_and_tiny_samples() {
        assert!(matches!(shapiro_wilk(&[2.0; 10]), Err(Error::Statistics(_))));
        assert!(shapiro_wilk(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn anderson_reference_values() {
        let y = [0.3, 1.7, 2.2, 2.9, 4.1, 4.4, 5.0, 7.5, 9.8, 12.0];
        let ad = anderson_darling_normal(&y, AdTable::SampleSizeAdjusted).unwrap();
        assert!((ad.a2 - 0.33397332973818017).abs() < 1e-9);
        assert_eq!(ad.critical_values, [0.501, 0.57, 0.684, 0.798, 0.95]);
        assert_eq!(ad_critical_values(37, AdTable::SampleSizeAdjusted)[2], 0.722);
        assert_eq!(ad_critical_values(37, AdTable::Asymptotic)[2], 0.752);
        let alt = anderson_darling_normal(&y, AdTable::Asymptotic).unwrap();
        assert!((alt.statistic - ad.a2 * (1.0 + 0.075 + 0.0225)).abs() < 1e-12);
    }

    #[test]
    fn anderson_is_location_scale_invariant() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let base = anderson_darling_normal(&x, AdTable::SampleSizeAdjusted).unwrap().a2;
        for (s, c) in [(2.5, -7.0), (0.01, 1e3), (1e4, 3.0)] {
            let y: Vec<f64> = x.iter().map(|v| v * s + c).collect();
            let a = anderson_darling_normal(&y, AdTable::SampleSizeAdjusted).unwrap().a2;
            assert!((a - base).abs() < 1e-9);
        }
    }

    #[test]
    fn report_decision_rule() {
        let norm = std_normal();
        let q: Vec<f64> = (1..=40).map(|i| norm.inverse_cdf(i as f64 / 41.0)).collect();
        assert!(normality_report(&q, AdTable::default()).unwrap().normal_at_005);
        let e: Vec<f64> = (0..40).map(|i| (-2.0 + 4.0 * i as f64 / 39.0).exp()).collect();
        let r = normality_report(&e, AdTable::default()).unwrap();
        assert!(!r.normal_at_005);
        assert!(r.shapiro_p < 1e-4);
    }
}
