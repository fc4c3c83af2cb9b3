//! Tonic/phasic decomposition, SCR event detection and the per-window
//! statistical feature vector.

use serde::{Deserialize, Serialize};

use crate::dsp::{self, Window};
use crate::error::{Error, Result};
use crate::ingest::SignalRecord;

/// Width of the centered moving-median used for the tonic level.
pub const TONIC_MEDIAN_WINDOW_S: f64 = 8.0;
/// Minimum rise (µS) for a phasic excursion to count as an SCR.
pub const SCR_MIN_AMPLITUDE_US: f64 = 0.01;

/// Bumped whenever the feature list or its definitions change.
pub const FEATURE_SET_VERSION: &str = "eda25-v1";

pub const N_FEATURES: usize = 25;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "f01_eda_mean",
    "f02_eda_std",
    "f03_eda_min",
    "f04_eda_max",
    "f05_eda_range",
    "f06_scl_mean",
    "f07_scl_std",
    "f08_scl_min",
    "f09_scl_max",
    "f10_scl_range",
    "f11_scr_mean",
    "f12_scr_std",
    "f13_scr_min",
    "f14_scr_max",
    "f15_scr_range",
    "f16_scr_peak_count",
    "f17_scr_amp_mean",
    "f18_scr_amp_max",
    "f19_scr_amp_std",
    "f20_scr_amp_sum",
    "f21_scr_rise_mean",
    "f22_scr_rise_sum",
    "f23_scr_area_pos",
    "f24_d1_mean_abs",
    "f25_d2_mean_abs",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Skin conductance level.
    pub tonic: Vec<f64>,
    /// Skin conductance response; `tonic + phasic` reproduces the input.
    pub phasic: Vec<f64>,
}

/// Fenwick tree over value ranks; supports k-th smallest lookups.
struct RankCounter {
    tree: Vec<i32>,
    top_bit: usize,
}

impl RankCounter {
    fn new(n: usize) -> Self {
        let top_bit = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        RankCounter {
            tree: vec![0; n + 1],
            top_bit,
        }
    }

    fn add(&mut self, rank: usize, delta: i32) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Rank (0-based) of the k-th smallest element, k starting at 1.
    fn kth(&self, mut k: i32) -> usize {
        let mut pos = 0;
        let mut step = self.top_bit;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] < k {
                pos = next;
                k -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

fn median_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Centered moving median of width `2 * half + 1`, indices clamped to the signal.
pub fn moving_median(samples: &[f64], half: usize) -> Vec<f64> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]).then(a.cmp(&b)));
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let clamp = |j: isize| j.clamp(0, n as isize - 1) as usize;
    let mut counter = RankCounter::new(n);
    for j in -(half as isize)..=(half as isize) {
        counter.add(rank[clamp(j)], 1);
    }
    let k = half as i32 + 1;
    let mut out = Vec::with_capacity(n);
    for i in 0..n as isize {
        out.push(samples[order[counter.kth(k)]]);
        counter.add(rank[clamp(i - half as isize)], -1);
        counter.add(rank[clamp(i + half as isize + 1)], 1);
    }
    out
}

/// Tonic = 8 s centered moving median, phasic = signal - tonic.
pub fn decompose(samples: &[f64], fs: f64) -> Result<Decomposition> {
    if samples.is_empty() {
        return Err(Error::Data("cannot decompose an empty signal".into()));
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite sample at index {i}")));
    }
    if !(fs > 0.0) {
        return Err(Error::Domain(format!("sampling rate must be positive, got {fs}")));
    }
    let half = (TONIC_MEDIAN_WINDOW_S * fs / 2.0).round() as usize;
    let width = 2 * half + 1;
    let tonic = if samples.len() * 2 < width {
        vec![median_of(samples); samples.len()]
    } else {
        moving_median(samples, half)
    };
    let phasic = samples.iter().zip(&tonic).map(|(x, t)| x - t).collect();
    Ok(Decomposition { tonic, phasic })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrEvent {
    pub onset_index: usize,
    pub peak_index: usize,
    /// `phasic[peak] - phasic[onset]` in µS.
    pub amplitude: f64,
    pub rise_time_s: f64,
}

/// Scans for rises: an onset is a sample where the first difference turns
/// positive; the peak is the first local maximum after it. Rises shorter than
/// the amplitude threshold are skipped. Events never overlap.
pub fn detect_scr_events(phasic: &[f64], fs: f64) -> Vec<ScrEvent> {
    let n = phasic.len();
    let mut events = Vec::new();
    if n < 2 {
        return events;
    }
    let mut i = 0;
    while i + 1 < n {
        let rising = phasic[i + 1] > phasic[i];
        let was_falling = i == 0 || phasic[i] <= phasic[i - 1];
        if !(rising && was_falling) {
            i += 1;
            continue;
        }
        let onset = i;
        let mut peak = onset + 1;
        while peak + 1 < n && phasic[peak + 1] > phasic[peak] {
            peak += 1;
        }
        let amplitude = phasic[peak] - phasic[onset];
        if amplitude >= SCR_MIN_AMPLITUDE_US {
            events.push(ScrEvent {
                onset_index: onset,
                peak_index: peak,
                amplitude,
                rise_time_s: (peak - onset) as f64 / fs,
            });
        }
        i = peak;
    }
    events
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFeatures {
    pub subject_id: String,
    pub t_start_s: f64,
    pub label: u8,
    pub features: Vec<f64>,
}

fn moments(v: &[f64]) -> [f64; 5] {
    let n = v.len() as f64;
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return [min, 0.0, min, max, 0.0];
    }
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    [mean, var.sqrt(), min, max, max - min]
}

/// The 25-dimensional feature vector of one window, in `FEATURE_NAMES` order.
pub fn feature_vector(samples: &[f64], fs: f64) -> Result<Vec<f64>> {
    let decomposition = decompose(samples, fs)?;
    let events = detect_scr_events(&decomposition.phasic, fs);

    let mut f = Vec::with_capacity(N_FEATURES);
    f.extend(moments(samples));
    f.extend(moments(&decomposition.tonic));
    f.extend(moments(&decomposition.phasic));

    let count = events.len() as f64;
    if events.is_empty() {
        f.extend([0.0; 7]);
    } else {
        let amps: Vec<f64> = events.iter().map(|e| e.amplitude).collect();
        let rises: Vec<f64> = events.iter().map(|e| e.rise_time_s).collect();
        let [amp_mean, amp_std, _, amp_max, _] = moments(&amps);
        let rise_sum: f64 = rises.iter().sum();
        f.extend([
            count,
            amp_mean,
            amp_max,
            amp_std,
            amps.iter().sum(),
            rise_sum / count,
            rise_sum,
        ]);
    }
    f.push(decomposition.phasic.iter().map(|p| p.max(0.0)).sum::<f64>() / fs);

    let d1: Vec<f64> = samples.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_abs = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
        }
    };
    let d2: Vec<f64> = d1.windows(2).map(|w| w[1] - w[0]).collect();
    f.push(mean_abs(&d1));
    f.push(mean_abs(&d2));
    debug_assert_eq!(f.len(), N_FEATURES);
    Ok(f)
}

/// Features for a labeled window; `None` when the window label is a tie.
pub fn compute_features(window: &Window<'_>, subject_id: &str, fs: f64) -> Result<Option<WindowFeatures>> {
    let Some(label) = dsp::window_label(window) else {
        return Ok(None);
    };
    Ok(Some(WindowFeatures {
        subject_id: subject_id.to_string(),
        t_start_s: window.start_time_s,
        label,
        features: feature_vector(window.samples, fs)?,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub window_s: f64,
    pub shift_s: f64,
    pub filter_order: usize,
    pub cutoff_hz: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            window_s: dsp::DEFAULT_WINDOW_S,
            shift_s: dsp::DEFAULT_SHIFT_S,
            filter_order: dsp::DEFAULT_FILTER_ORDER,
            cutoff_hz: dsp::DEFAULT_CUTOFF_HZ,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordExtraction {
    pub subject_id: String,
    pub filtered: bool,
    pub too_short: bool,
    pub windows_total: usize,
    pub windows_dropped_tie: usize,
    pub rows: usize,
}

/// Filter (when the Nyquist rule allows), window, label and featurize a record.
pub fn extract_record(
    record: &SignalRecord,
    config: &ExtractionConfig,
) -> Result<(Vec<WindowFeatures>, RecordExtraction)> {
    let filtered = dsp::should_filter(record.sampling_rate_hz, config.cutoff_hz)?;
    let prepared;
    let source = if filtered {
        let design =
            dsp::design_butterworth_lowpass(config.filter_order, config.cutoff_hz, record.sampling_rate_hz)?;
        prepared = SignalRecord {
            samples: dsp::apply_filter(&design, &record.samples)?,
            ..record.clone()
        };
        &prepared
    } else {
        record
    };
    let windowing = dsp::window_slices(source, config.window_s, config.shift_s)?;
    let mut rows = Vec::with_capacity(windowing.windows.len());
    let mut dropped = 0;
    for w in &windowing.windows {
        match compute_features(w, &record.subject_id, record.sampling_rate_hz)? {
            Some(row) => rows.push(row),
            None => dropped += 1,
        }
    }
    let log = RecordExtraction {
        subject_id: record.subject_id.clone(),
        filtered,
        too_short: windowing.too_short,
        windows_total: windowing.windows.len(),
        windows_dropped_tie: dropped,
        rows: rows.len(),
    };
    Ok((rows, log))
}

/// Featurizes a set of records; rows come back ordered by (subject, start time).
pub fn extract_dataset(
    records: &[SignalRecord],
    config: &ExtractionConfig,
) -> Result<(Vec<WindowFeatures>, Vec<RecordExtraction>)> {
    use rayon::prelude::*;
    let parts: Vec<_> = records
        .par_iter()
        .map(|r| extract_record(r, config))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    for (r, l) in parts {
        rows.extend(r);
        logs.push(l);
    }
    rows.sort_by(|a, b| {
        a.subject_id
            .cmp(&b.subject_id)
            .then(a.t_start_s.total_cmp(&b.t_start_s))
    });
    Ok((rows, logs))
}

pub fn feature_csv_header() -> String {
    let mut h = String::from("subject_id,t_start_s,label");
    for name in FEATURE_NAMES {
        h.push(',');
        h.push_str(name);
    }
    h
}

pub fn write_feature_csv(rows: &[WindowFeatures], path: &std::path::Path) -> Result<()> {
    use crate::ingest::format_sig12;
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", feature_csv_header())?;
    for row in rows {
        write!(out, "{},{},{}", row.subject_id, format_sig12(row.t_start_s), row.label)?;
        for v in &row.features {
            write!(out, ",{}", format_sig12(*v))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_feature_csv(path: &std::path::Path) -> Result<Vec<WindowFeatures>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Schema("empty feature file".into()))?;
    if header.trim() != feature_csv_header() {
        return Err(Error::Schema(format!(
            "feature header does not match feature set {FEATURE_SET_VERSION}"
        )));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 + N_FEATURES {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} columns, found {}", 3 + N_FEATURES, cells.len()),
            });
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid {what} '{s}'"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite {what}"),
                })
            }
        };
        let label = match cells[2].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("label must be 0 or 1, got '{other}'"),
                })
            }
        };
        rows.push(WindowFeatures {
            subject_id: cells[0].trim().to_string(),
            t_start_s: num(cells[1], "t_start_s")?,
            label,
            features: cells[3..]
                .iter()
                .zip(FEATURE_NAMES)
                .map(|(c, name)| num(c, name))
                .collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}
