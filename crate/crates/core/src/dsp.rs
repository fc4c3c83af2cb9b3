//! Conditional Butterworth low-pass filtering and sliding windows.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SignalRecord;

pub const DEFAULT_FILTER_ORDER: usize = 4;
pub const DEFAULT_CUTOFF_HZ: f64 = 5.0;
pub const DEFAULT_WINDOW_S: f64 = 60.0;
pub const DEFAULT_SHIFT_S: f64 = 30.0;

/// True iff the normalized cutoff `cutoff / (fs/2)` lies in the open interval (0,1).
pub fn should_filter(sampling_rate_hz: f64, cutoff_hz: f64) -> Result<bool> {
    if !(sampling_rate_hz > 0.0 && cutoff_hz > 0.0) {
        return Err(Error::Domain(format!(
            "sampling rate and cutoff must be positive (fs={sampling_rate_hz}, cutoff={cutoff_hz})"
        )));
    }
    let normalized = cutoff_hz / (sampling_rate_hz / 2.0);
    Ok(normalized > 0.0 && normalized < 1.0)
}

/// One second-order section, `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z2) / (1.0 + self.a1 * z_inv + self.a2 * z2)
    }

    /// Both poles strictly inside the unit circle (Jury conditions for a quadratic).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDesign {
    pub order: usize,
    pub cutoff_hz: f64,
    pub sampling_rate_hz: f64,
    pub sections: Vec<Biquad>,
}

/// Butterworth low-pass by bilinear transform with pre-warping at the cutoff,
/// realized as `order / 2` cascaded biquads.
pub fn design_butterworth_lowpass(
    order: usize,
    cutoff_hz: f64,
    sampling_rate_hz: f64,
) -> Result<FilterDesign> {
    if order < 2 || order % 2 != 0 {
        return Err(Error::Design(format!("order must be even and >= 2, got {order}")));
    }
    if !should_filter(sampling_rate_hz, cutoff_hz)? {
        return Err(Error::Design(format!(
            "normalized cutoff {} outside (0,1)",
            cutoff_hz / (sampling_rate_hz / 2.0)
        )));
    }
    let k = (PI * cutoff_hz / sampling_rate_hz).tan();
    let k2 = k * k;
    let sections = (0..order / 2)
        .map(|i| {
            // Analog pole pair at angle theta from the imaginary axis; q = 1 / (2 sin theta).
            let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
            let inv_q = 2.0 * theta.sin();
            let norm = 1.0 / (1.0 + k * inv_q + k2);
            let b0 = k2 * norm;
            Biquad {
                b0,
                b1: 2.0 * b0,
                b2: b0,
                a1: 2.0 * (k2 - 1.0) * norm,
                a2: (1.0 - k * inv_q + k2) * norm,
            }
        })
        .collect();
    Ok(FilterDesign {
        order,
        cutoff_hz,
        sampling_rate_hz,
        sections,
    })
}

impl FilterDesign {
    pub fn response_at(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.sampling_rate_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        self.response_at(freq_hz).norm()
    }
}

/// Causal pass through the cascade (transposed direct form II, zero initial state).
pub fn apply_filter(design: &FilterDesign, samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Data("cannot filter an empty signal".into()));
    }
    if let Some(i) = samples.iter().position(|v| v.is_nan()) {
        return Err(Error::Data(format!("NaN in filter input at index {i}")));
    }
    let mut out = samples.to_vec();
    for s in &design.sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in out.iter_mut() {
            let x = *v;
            let y = s.b0 * x + z1;
            z1 = s.b1 * x - s.a1 * y + z2;
            z2 = s.b2 * x - s.a2 * y;
            *v = y;
        }
    }
    Ok(out)
}

/// A contiguous slice of a record. `end_index` is exclusive.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub start_index: usize,
    pub end_index: usize,
    pub start_time_s: f64,
    pub samples: &'a [f64],
    pub labels: &'a [u8],
}

#[derive(Debug, Clone)]
pub struct Windowing<'a> {
    pub windows: Vec<Window<'a>>,
    /// Set when the record is shorter than a single window.
    pub too_short: bool,
}

/// Window and shift lengths in samples for the given rate.
pub fn window_lengths(fs: f64, window_s: f64, shift_s: f64) -> Result<(usize, usize)> {
    if !(fs > 0.0 && window_s > 0.0 && shift_s > 0.0) {
        return Err(Error::Domain("window, shift and rate must be positive".into()));
    }
    let w = (window_s * fs).round() as usize;
    let s = (shift_s * fs).round() as usize;
    if w == 0 || s == 0 {
        return Err(Error::Domain(format!(
            "window ({window_s}s) or shift ({shift_s}s) rounds to zero samples at {fs} Hz"
        )));
    }
    Ok((w, s))
}

/// Windows anchored at the record start; trailing partial windows are dropped.
pub fn window_slices(record: &SignalRecord, window_s: f64, shift_s: f64) -> Result<Windowing<'_>> {
    let fs = record.sampling_rate_hz;
    let (w, s) = window_lengths(fs, window_s, shift_s)?;
    let n = record.len();
    if n < w {
        return Ok(Windowing {
            windows: Vec::new(),
            too_short: true,
        });
    }
    let count = (n - w) / s + 1;
    let windows = (0..count)
        .map(|k| {
            let start = k * s;
            Window {
                start_index: start,
                end_index: start + w,
                start_time_s: start as f64 / fs,
                samples: &record.samples[start..start + w],
                labels: &record.labels[start..start + w],
            }
        })
        .collect();
    Ok(Windowing {
        windows,
        too_short: false,
    })
}

/// Majority vote over per-sample labels; `None` on an exact tie (window dropped).
pub fn window_label(window: &Window<'_>) -> Option<u8> {
    let ones = window.labels.iter().filter(|&&l| l == 1).count();
    let zeros = window.labels.len() - ones;
    match ones.cmp(&zeros) {
        std::cmp::Ordering::Greater => Some(1),
        std::cmp::Ordering::Less => Some(0),
        std::cmp::Ordering::Equal => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Device;
    use proptest::prelude::*;

    fn record(n: usize, fs: f64) -> SignalRecord {
        SignalRecord::new("s", Device::Wrist, fs, vec![1.0; n], vec![0; n]).unwrap()
    }

    #[test]
    fn nyquist_rule_examples() {
        assert!(should_filter(700.0, 5.0).unwrap());
        assert!(!should_filter(4.0, 5.0).unwrap());
        assert!(!should_filter(10.0, 5.0).unwrap());
        assert!(should_filter(0.0, 5.0).is_err());
        assert!(should_filter(4.0, -1.0).is_err());
    }

    #[test]
    fn design_rejects_bad_inputs() {
        assert!(matches!(design_butterworth_lowpass(3, 5.0, 700.0), Err(Error::Design(_))));
        assert!(matches!(design_butterworth_lowpass(4, 5.0, 4.0), Err(Error::Design(_))));
    }

    #[test]
    fn design_sections_are_stable_with_unit_dc() {
        let d = design_butterworth_lowpass(4, 5.0, 700.0).unwrap();
        assert_eq!(d.sections.len(), 2);
        assert!(d.sections.iter().all(Biquad::is_stable));
        assert!((d.magnitude_at(0.0) - 1.0).abs() < 1e-9);
        let at_cut = d.magnitude_at(5.0);
        assert!((at_cut - std::f64::consts::FRAC_1_SQRT_2).abs() / std::f64::consts::FRAC_1_SQRT_2 < 1e-3);
        assert!(d.magnitude_at(50.0) < 1e-3);
    }

    #[test]
    fn constant_input_settles() {
        let d = design_butterworth_lowpass(4, 5.0, 700.0).unwrap();
        let y = apply_filter(&d, &vec![2.5; 7000]).unwrap();
        assert_eq!(y.len(), 7000);
        assert!((y.last().unwrap() - 2.5).abs() < 1e-6);
    }

    #[test]
    fn stopband_sine_is_suppressed() {
        let fs = 700.0;
        let d = design_butterworth_lowpass(4, 5.0, fs).unwrap();
        let x: Vec<f64> = (0..7000).map(|i| (2.0 * PI * 100.0 * i as f64 / fs).sin()).collect();
        let y = apply_filter(&d, &x).unwrap();
        let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
        // skip the start-up transient
        assert!(rms(&y[700..]) < 0.01 * rms(&x[700..]));
    }

    #[test]
    fn nan_input_is_rejected() {
        let d = design_butterworth_lowpass(4, 5.0, 700.0).unwrap();
        assert!(matches!(apply_filter(&d, &[1.0, f64::NAN]), Err(Error::Data(_))));
        assert!(apply_filter(&d, &[]).is_err());
    }

    #[test]
    fn window_count_examples() {
        let r = record(300 * 4, 4.0);
        assert_eq!(window_slices(&r, 60.0, 30.0).unwrap().windows.len(), 9);
        let r = record(60 * 4, 4.0);
        assert_eq!(window_slices(&r, 60.0, 30.0).unwrap().windows.len(), 1);
        let r = record(59 * 4, 4.0);
        let w = window_slices(&r, 60.0, 30.0).unwrap();
        assert!(w.windows.is_empty());
        assert!(w.too_short);
    }

    #[test]
    fn window_geometry() {
        let r = record(300 * 5, 5.0);
        let w = window_slices(&r, 60.0, 30.0).unwrap();
        for (k, win) in w.windows.iter().enumerate() {
            assert_eq!(win.start_index, k * 150);
            assert_eq!(win.end_index - win.start_index, 300);
            assert_eq!(win.start_time_s, 30.0 * k as f64);
            assert_eq!(win.samples.len(), 300);
        }
    }

    #[test]
    fn majority_labels() {
        let mk = |labels: &'static [u8]| Window {
            start_index: 0,
            end_index: labels.len(),
            start_time_s: 0.0,
            samples: &[],
            labels,
        };
        assert_eq!(window_label(&mk(&[1, 1, 1, 1])), Some(1));
        assert_eq!(window_label(&mk(&[1, 1, 1, 1, 1, 1, 1, 0, 0, 0])), Some(1));
        assert_eq!(window_label(&mk(&[0, 0, 0, 1])), Some(0));
        assert_eq!(window_label(&mk(&[1, 0, 1, 0])), None);
    }

    proptest! {
        #[test]
        fn window_count_formula(n in 1usize..5000, w in 1usize..400, s in 1usize..400) {
            let r = record(n, 1.0);
            let out = window_slices(&r, w as f64, s as f64).unwrap();
            let expected = if n >= w { (n - w) / s + 1 } else { 0 };
            prop_assert_eq!(out.windows.len(), expected);
            prop_assert_eq!(out.too_short, n < w);
            // coverage multiplicity never exceeds ceil(w / s)
            if let Some(last) = out.windows.last() {
                let mut cover = vec![0usize; last.end_index];
                for win in &out.windows {
                    for c in &mut cover[win.start_index..win.end_index] { *c += 1; }
                }
                let bound = w.div_ceil(s);
                prop_assert!(cover.iter().all(|&c| c <= bound));
                if s <= w {
                    prop_assert!(cover.iter().all(|&c| c >= 1));
                }
            }
        }

        #[test]
        fn nyquist_rule_is_scale_invariant(fs in 0.1f64..2000.0, c in 0.1f64..2000.0, k in 0.01f64..100.0) {
            let a = should_filter(fs, c).unwrap();
            let b = should_filter(k * fs, k * c).unwrap();
            // only exact-boundary rounding could differ
            let norm = c / (fs / 2.0);
            prop_assume!((norm - 1.0).abs() > 1e-9);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn filter_is_linear(
            xs in proptest::collection::vec(-10.0f64..10.0, 50..300),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let d = design_butterworth_lowpass(4, 5.0, 700.0).unwrap();
            let ys: Vec<f64> = xs.iter().rev().map(|v| v * 0.5 + 1.0).collect();
            let mixed: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
            let lhs = apply_filter(&d, &mixed).unwrap();
            let fx = apply_filter(&d, &xs).unwrap();
            let fy = apply_filter(&d, &ys).unwrap();
            for i in 0..xs.len() {
                prop_assert!((lhs[i] - (a * fx[i] + b * fy[i])).abs() < 1e-9);
            }
        }
    }
}
