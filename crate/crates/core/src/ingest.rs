//! EDA record loading, dataset-export conversion and synthetic corpora.
//!
//! The on-disk canonical form is a CSV (`t_s,eda_us,label`) plus a JSON
//! sidecar carrying `subject_id`, `device`, `sampling_rate_hz` and
//! `n_samples`. Both files share the stem `<subject>_<device>`.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Stress threshold applied to continuous ratings (AffectiveROAD convention).
pub const DEFAULT_STRESS_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Chest,
    Wrist,
    Finger,
    Synthetic,
}

impl Device {
    pub fn as_str(&self) -> &'static str {
        match self {
            Device::Chest => "chest",
            Device::Wrist => "wrist",
            Device::Finger => "finger",
            Device::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Device {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chest" => Ok(Device::Chest),
            "wrist" => Ok(Device::Wrist),
            "finger" => Ok(Device::Finger),
            "synthetic" => Ok(Device::Synthetic),
            other => Err(Error::Schema(format!("unknown device '{other}'"))),
        }
    }
}

/// One subject/device EDA stream with per-sample binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub subject_id: String,
    pub device: Device,
    pub sampling_rate_hz: f64,
    /// Skin conductance in microsiemens.
    pub samples: Vec<f64>,
    /// 0 = non-stress, 1 = stress.
    pub labels: Vec<u8>,
}

impl SignalRecord {
    pub fn new(
        subject_id: impl Into<String>,
        device: Device,
        sampling_rate_hz: f64,
        samples: Vec<f64>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let record = SignalRecord {
            subject_id: subject_id.into(),
            device,
            sampling_rate_hz,
            samples,
            labels,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return Err(Error::Schema(format!(
                "sampling rate must be positive, got {}",
                self.sampling_rate_hz
            )));
        }
        if self.samples.len() != self.labels.len() {
            return Err(Error::Schema(format!(
                "{} samples but {} labels",
                self.samples.len(),
                self.labels.len()
            )));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at index {i}")));
        }
        if let Some(i) = self.labels.iter().position(|&l| l > 1) {
            return Err(Error::Data(format!("non-binary label at index {i}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate_hz
    }

    /// File stem shared by the CSV and its sidecar.
    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.subject_id, self.device)
    }

    /// Keeps every `factor`-th sample (no anti-alias filtering).
    pub fn decimate(&self, factor: usize, device: Device) -> Result<SignalRecord> {
        if factor == 0 {
            return Err(Error::Domain("decimation factor must be positive".into()));
        }
        SignalRecord::new(
            self.subject_id.clone(),
            device,
            self.sampling_rate_hz / factor as f64,
            self.samples.iter().step_by(factor).copied().collect(),
            self.labels.iter().step_by(factor).copied().collect(),
        )
    }
}

/// A continuous stress rating in [0,1] and the cut that binarizes it.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousStressLabel {
    pub values: Vec<f64>,
    pub threshold: f64,
}

impl ContinuousStressLabel {
    pub fn new(values: Vec<f64>) -> Self {
        ContinuousStressLabel {
            values,
            threshold: DEFAULT_STRESS_THRESHOLD,
        }
    }

    pub fn with_threshold(values: Vec<f64>, threshold: f64) -> Self {
        ContinuousStressLabel { values, threshold }
    }
}

/// Binarizes a continuous rating; a value equal to the threshold counts as stress.
pub fn threshold_labels(continuous: &ContinuousStressLabel) -> Result<Vec<u8>> {
    let t = continuous.threshold;
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("threshold {t} outside (0,1)")));
    }
    continuous
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !(0.0..=1.0).contains(&v) {
                Err(Error::Domain(format!("rating {v} at index {i} outside [0,1]")))
            } else {
                Ok(u8::from(v >= t))
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Canonical format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub subject_id: String,
    pub device: Device,
    pub sampling_rate_hz: f64,
    pub n_samples: usize,
}

/// Formats a value rounded to 12 significant digits, shortest form.
pub fn format_sig12(v: f64) -> String {
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    let s = format!("{rounded}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `<dir>/<subject>_<device>.csv` and its JSON sidecar.
pub fn write_canonical(record: &SignalRecord, dir: &Path) -> Result<PathBuf> {
    record.validate()?;
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", record.file_stem()));
    let mut out = std::io::BufWriter::new(fs::File::create(&csv_path)?);
    writeln!(out, "t_s,eda_us,label")?;
    for (i, (&v, &l)) in record.samples.iter().zip(&record.labels).enumerate() {
        let t = i as f64 / record.sampling_rate_hz;
        writeln!(out, "{},{},{}", format_sig12(t), format_sig12(v), l)?;
    }
    out.flush()?;
    let sidecar = Sidecar {
        subject_id: record.subject_id.clone(),
        device: record.device,
        sampling_rate_hz: record.sampling_rate_hz,
        n_samples: record.len(),
    };
    fs::write(
        sidecar_path(&csv_path),
        serde_json::to_string_pretty(&sidecar)? + "\n",
    )?;
    Ok(csv_path)
}

fn parse_field<T: FromStr>(field: Option<&str>, line: usize, name: &str) -> Result<T> {
    let raw = field.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing column '{name}'"),
    })?;
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {name} value '{}'", raw.trim()),
    })
}

/// Loads a canonical CSV; the sampling rate comes from the sidecar.
pub fn load_canonical(csv_path: &Path) -> Result<SignalRecord> {
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(csv_path))?)?;
    let reader = BufReader::new(fs::File::open(csv_path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Schema("empty file".into()))?;
    if header.trim() != "t_s,eda_us,label" {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header '{}'", header.trim()),
        });
    }
    let mut samples = Vec::with_capacity(sidecar.n_samples);
    let mut labels = Vec::with_capacity(sidecar.n_samples);
    let mut last_t = f64::NEG_INFINITY;
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let t: f64 = parse_field(fields.next(), line_no, "t_s")?;
        let v: f64 = parse_field(fields.next(), line_no, "eda_us")?;
        let l: u8 = parse_field(fields.next(), line_no, "label")?;
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: line_no,
                message: "too many columns".into(),
            });
        }
        if !v.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: "non-finite eda_us".into(),
            });
        }
        if l > 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("label must be 0 or 1, got {l}"),
            });
        }
        if t <= last_t {
            return Err(Error::Schema(format!("t_s not increasing at line {line_no}")));
        }
        last_t = t;
        samples.push(v);
        labels.push(l);
    }
    if samples.len() != sidecar.n_samples {
        return Err(Error::Schema(format!(
            "sidecar declares {} samples, file has {}",
            sidecar.n_samples,
            samples.len()
        )));
    }
    SignalRecord::new(
        sidecar.subject_id,
        sidecar.device,
        sidecar.sampling_rate_hz,
        samples,
        labels,
    )
}

/// Loads every canonical CSV in a directory, sorted by file name.
pub fn load_canonical_dir(dir: &Path) -> Result<Vec<SignalRecord>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv") && sidecar_path(p).exists())
        .collect();
    paths.sort();
    paths.iter().map(|p| load_canonical(p)).collect()
}

// ---------------------------------------------------------------------------
// Dataset export converters
// ---------------------------------------------------------------------------

/// Layout of a user-produced CSV export. Every kind expects a header row
/// with an `eda` column plus the label column named below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExportKind {
    /// `eda,label` with WESAD protocol codes: 2 = stress, 1/3/4 = non-stress;
    /// rows with any other code (transient, undefined) are discarded.
    Wesad,
    /// `eda,stress` with a continuous rating in [0,1], binarized at `threshold`.
    AffectiveRoad { threshold: f64 },
    /// `eda,label` with 0/1 labels.
    Binary,
}

pub fn convert_export(
    path: &Path,
    subject_id: &str,
    device: Device,
    sampling_rate_hz: f64,
    kind: ExportKind,
) -> Result<SignalRecord> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Schema(format!("export lacks column '{name}'")))
    };
    let eda_col = col("eda")?;
    let label_col = match kind {
        ExportKind::AffectiveRoad { .. } => col("stress")?,
        _ => col("label")?,
    };
    let mut samples = Vec::new();
    let mut raw_labels = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row?;
        let eda: f64 = parse_field(row.get(eda_col), line, "eda")?;
        let label: f64 = parse_field(row.get(label_col), line, "label")?;
        match kind {
            ExportKind::Wesad => {
                let code = label as i64;
                if label.fract() != 0.0 {
                    return Err(Error::Parse {
                        line,
                        message: format!("non-integer protocol code {label}"),
                    });
                }
                match code {
                    2 => raw_labels.push(1.0),
                    1 | 3 | 4 => raw_labels.push(0.0),
                    _ => continue,
                }
            }
            ExportKind::Binary => {
                if label != 0.0 && label != 1.0 {
                    return Err(Error::Parse {
                        line,
                        message: format!("label must be 0 or 1, got {label}"),
                    });
                }
                raw_labels.push(label);
            }
            ExportKind::AffectiveRoad { .. } => raw_labels.push(label),
        }
        samples.push(eda);
    }
    let labels = match kind {
        ExportKind::AffectiveRoad { threshold } => {
            threshold_labels(&ContinuousStressLabel::with_threshold(raw_labels, threshold))?
        }
        _ => raw_labels.iter().map(|&l| l as u8).collect(),
    };
    SignalRecord::new(subject_id, device, sampling_rate_hz, samples, labels)
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

/// Rise of a synthetic SCR: half-Gaussian width (s) before the peak.
pub const SCR_RISE_SIGMA_S: f64 = 1.0;
/// Exponential decay time constant (s) after the peak.
pub const SCR_DECAY_TAU_S: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub stress: bool,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_subjects: usize,
    pub sampling_rate_hz: f64,
    pub segments: Vec<Segment>,
    /// Per-subject tonic level is drawn uniformly from this range (µS).
    pub baseline_scl_range: (f64, f64),
    pub stress_event_rate_per_min: f64,
    pub nonstress_event_rate_per_min: f64,
    pub stress_amplitude_range: (f64, f64),
    pub nonstress_amplitude_range: (f64, f64),
    pub noise_std: f64,
    pub rng_seed: u64,
    /// Per-subject multiplier on both event rates; (1,1) disables it.
    pub subject_rate_scale_range: (f64, f64),
    /// Per-subject multiplier on SCR amplitudes; (1,1) disables it.
    pub subject_amplitude_scale_range: (f64, f64),
    /// Per-subject rise of the tonic level during stress segments (µS).
    pub stress_scl_shift_range: (f64, f64),
    pub subject_prefix: String,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_subjects: 7,
            sampling_rate_hz: 5.0,
            segments: alternating_plan(300.0, 2),
            baseline_scl_range: (2.0, 12.0),
            stress_event_rate_per_min: 12.0,
            nonstress_event_rate_per_min: 2.0,
            stress_amplitude_range: (0.2, 1.0),
            nonstress_amplitude_range: (0.05, 0.4),
            noise_std: 0.01,
            rng_seed: 42,
            subject_rate_scale_range: (1.0, 1.0),
            subject_amplitude_scale_range: (1.0, 1.0),
            stress_scl_shift_range: (0.0, 0.0),
            subject_prefix: "S".into(),
        }
    }
}

/// `[non-stress, stress] × repeats`, every segment `segment_s` long.
pub fn alternating_plan(segment_s: f64, repeats: usize) -> Vec<Segment> {
    (0..repeats)
        .flat_map(|_| {
            [
                Segment { stress: false, duration_s: segment_s },
                Segment { stress: true, duration_s: segment_s },
            ]
        })
        .collect()
}

fn check_range(name: &str, (lo, hi): (f64, f64), strict: bool) -> Result<()> {
    let ok = lo.is_finite() && hi.is_finite() && lo >= 0.0 && if strict { lo < hi } else { lo <= hi };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} range ({lo}, {hi}) is invalid")))
    }
}

impl SyntheticConfig {
    /// Ten subjects at 4 Hz whose event rates, SCR amplitudes and baselines
    /// vary widely between people. Stress raises each subject's tonic level
    /// by a personal amount and only mildly raises the event rate, so the
    /// cue is easy to learn within one subject and hard to transfer.
    pub fn heterogeneous() -> Self {
        SyntheticConfig {
            n_subjects: 10,
            sampling_rate_hz: 4.0,
            segments: alternating_plan(120.0, 2),
            stress_event_rate_per_min: 5.0,
            nonstress_event_rate_per_min: 3.0,
            stress_amplitude_range: (0.1, 0.6),
            nonstress_amplitude_range: (0.1, 0.6),
            subject_rate_scale_range: (0.25, 4.0),
            subject_amplitude_scale_range: (0.3, 3.0),
            stress_scl_shift_range: (0.3, 1.0),
            ..SyntheticConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::Config("n_subjects must be positive".into()));
        }
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return Err(Error::Config("sampling_rate_hz must be positive".into()));
        }
        if self.segments.is_empty() || self.total_duration_s() <= 0.0 {
            return Err(Error::Config("segment plan has zero duration".into()));
        }
        if self.segments.iter().any(|s| !(s.duration_s > 0.0)) {
            return Err(Error::Config("every segment needs a positive duration".into()));
        }
        let (rs, rn) = (self.stress_event_rate_per_min, self.nonstress_event_rate_per_min);
        if !(rs >= 0.0 && rn >= 0.0) {
            return Err(Error::Config("event rates must be non-negative".into()));
        }
        // Both rates zero is the degenerate "no responses" corpus.
        if !(rs > rn || (rs == 0.0 && rn == 0.0)) {
            return Err(Error::Config(
                "stress event rate must exceed the non-stress rate".into(),
            ));
        }
        check_range("baseline_scl", self.baseline_scl_range, true)?;
        check_range("stress_amplitude", self.stress_amplitude_range, true)?;
        check_range("nonstress_amplitude", self.nonstress_amplitude_range, true)?;
        check_range("subject_rate_scale", self.subject_rate_scale_range, false)?;
        check_range("subject_amplitude_scale", self.subject_amplitude_scale_range, false)?;
        check_range("stress_scl_shift", self.stress_scl_shift_range, false)?;
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        Ok(())
    }

    pub fn total_duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }
}

/// Unit-height SCR pulse evaluated `dt` seconds after its peak.
pub fn scr_pulse(dt: f64) -> f64 {
    if dt < 0.0 {
        (-0.5 * (dt / SCR_RISE_SIGMA_S).powi(2)).exp()
    } else {
        (-dt / SCR_DECAY_TAU_S).exp()
    }
}

/// Ground truth for one synthetic subject, kept for detector checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEvent {
    pub peak_time_s: f64,
    pub amplitude: f64,
    pub stress: bool,
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<SignalRecord>> {
    Ok(generate_synthetic_with_events(config)?
        .into_iter()
        .map(|(r, _)| r)
        .collect())
}

pub fn generate_synthetic_with_events(
    config: &SyntheticConfig,
) -> Result<Vec<(SignalRecord, Vec<SyntheticEvent>)>> {
    config.validate()?;
    (0..config.n_subjects)
        .map(|s| generate_subject(config, s))
        .collect()
}

fn generate_subject(
    config: &SyntheticConfig,
    subject: usize,
) -> Result<(SignalRecord, Vec<SyntheticEvent>)> {
    let fs = config.sampling_rate_hz;
    let mut rng = rng::stream(rng::derive_seed(config.rng_seed, &[subject as u64]));
    let (blo, bhi) = config.baseline_scl_range;
    let baseline = rng::uniform_in(&mut rng, blo, bhi);
    let (rlo, rhi) = config.subject_rate_scale_range;
    let rate_scale = rng::uniform_in(&mut rng, rlo, rhi);
    let (alo, ahi) = config.subject_amplitude_scale_range;
    let amp_scale = rng::uniform_in(&mut rng, alo, ahi);
    let (slo, shi) = config.stress_scl_shift_range;
    let scl_shift = rng::uniform_in(&mut rng, slo, shi);

    let n = (config.total_duration_s() * fs).round() as usize;
    let mut labels = vec![0u8; n];
    let mut events = Vec::new();
    let mut seg_start = 0.0;
    for seg in &config.segments {
        let seg_end = seg_start + seg.duration_s;
        let first = ((seg_start * fs).ceil() as usize).min(n);
        let last = ((seg_end * fs).ceil() as usize).min(n);
        labels[first..last].fill(u8::from(seg.stress));

        let per_min = if seg.stress {
            config.stress_event_rate_per_min
        } else {
            config.nonstress_event_rate_per_min
        };
        let rate_hz = per_min * rate_scale / 60.0;
        let (lo, hi) = if seg.stress {
            config.stress_amplitude_range
        } else {
            config.nonstress_amplitude_range
        };
        if rate_hz > 0.0 {
            let mut t = seg_start;
            loop {
                let u: f64 = 1.0 - rand::Rng::gen::<f64>(&mut rng);
                t += -u.ln() / rate_hz;
                if t >= seg_end {
                    break;
                }
                let amplitude = amp_scale * rng::uniform_in(&mut rng, lo, hi);
                events.push(SyntheticEvent {
                    peak_time_s: t,
                    amplitude,
                    stress: seg.stress,
                });
            }
        }
        seg_start = seg_end;
    }

    let mut samples: Vec<f64> = labels.iter().map(|&l| baseline + scl_shift * f64::from(l)).collect();
    let rise_span = 4.0 * SCR_RISE_SIGMA_S;
    let decay_span = 10.0 * SCR_DECAY_TAU_S;
    for ev in &events {
        let i0 = ((ev.peak_time_s - rise_span) * fs).ceil().max(0.0) as usize;
        let i1 = (((ev.peak_time_s + decay_span) * fs).floor() as usize + 1).min(n);
        for (i, s) in samples.iter_mut().enumerate().take(i1).skip(i0) {
            *s += ev.amplitude * scr_pulse(i as f64 / fs - ev.peak_time_s);
        }
    }
    if config.noise_std > 0.0 {
        for s in samples.iter_mut() {
            *s += config.noise_std * rng::standard_normal(&mut rng);
        }
    }

    let id = format!("{}{:02}", config.subject_prefix, subject + 1);
    let record = SignalRecord::new(id, Device::Synthetic, fs, samples, labels)?;
    Ok((record, events))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let c = ContinuousStressLabel::new(vec![0.0, 0.4, 0.39]);
        assert_eq!(threshold_labels(&c).unwrap(), vec![0, 1, 0]);
        let z = ContinuousStressLabel::new(vec![0.0; 5]);
        assert_eq!(threshold_labels(&z).unwrap(), vec![0; 5]);
        let h = ContinuousStressLabel::with_threshold(vec![0.5, 0.5], 0.5);
        assert_eq!(threshold_labels(&h).unwrap(), vec![1, 1]);
    }

    #[test]
    fn threshold_rejects_out_of_range() {
        let c = ContinuousStressLabel::new(vec![0.2, 1.2]);
        assert!(matches!(threshold_labels(&c), Err(Error::Domain(_))));
        let c = ContinuousStressLabel::new(vec![-0.1]);
        assert!(matches!(threshold_labels(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn record_invariants() {
        assert!(SignalRecord::new("a", Device::Wrist, 4.0, vec![1.0], vec![0, 1]).is_err());
        assert!(SignalRecord::new("a", Device::Wrist, 0.0, vec![1.0], vec![0]).is_err());
        assert!(SignalRecord::new("a", Device::Wrist, 4.0, vec![f64::NAN], vec![0]).is_err());
        assert!(SignalRecord::new("a", Device::Wrist, 4.0, vec![1.0], vec![0]).is_ok());
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(format_sig12(0.25), "0.25");
        assert_eq!(format_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig12(1234567.891234567), "1234567.89123");
        assert_eq!(format_sig12(-0.0), "0");
    }

    #[test]
    fn synthetic_zero_duration_plan_is_rejected() {
        let cfg = SyntheticConfig {
            segments: vec![],
            ..Default::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        let cfg = SyntheticConfig {
            segments: vec![Segment { stress: true, duration_s: 0.0 }],
            ..Default::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn synthetic_rate_ordering_is_enforced() {
        let cfg = SyntheticConfig {
            stress_event_rate_per_min: 2.0,
            nonstress_event_rate_per_min: 4.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn synthetic_degenerate_is_constant_baseline() {
        let cfg = SyntheticConfig {
            n_subjects: 3,
            stress_event_rate_per_min: 0.0,
            nonstress_event_rate_per_min: 0.0,
            noise_std: 0.0,
            ..Default::default()
        };
        for rec in generate_synthetic(&cfg).unwrap() {
            let b = rec.samples[0];
            assert!(b >= 2.0 && b <= 12.0);
            assert!(rec.samples.iter().all(|&v| v == b));
        }
    }

    #[test]
    fn stress_shift_raises_the_tonic_level() {
        let cfg = SyntheticConfig {
            n_subjects: 2,
            stress_event_rate_per_min: 0.0,
            nonstress_event_rate_per_min: 0.0,
            noise_std: 0.0,
            stress_scl_shift_range: (0.5, 0.5),
            ..Default::default()
        };
        for rec in generate_synthetic(&cfg).unwrap() {
            let b = rec.samples[0];
            for (&v, &l) in rec.samples.iter().zip(&rec.labels) {
                assert_eq!(v, b + 0.5 * f64::from(l));
            }
        }
        assert!(SyntheticConfig::heterogeneous().validate().is_ok());
    }

    #[test]
    fn synthetic_labels_follow_plan() {
        let cfg = SyntheticConfig {
            n_subjects: 1,
            sampling_rate_hz: 4.0,
            segments: vec![
                Segment { stress: false, duration_s: 10.0 },
                Segment { stress: true, duration_s: 5.0 },
            ],
            ..Default::default()
        };
        let rec = &generate_synthetic(&cfg).unwrap()[0];
        assert_eq!(rec.len(), 60);
        assert!(rec.labels[..40].iter().all(|&l| l == 0));
        assert!(rec.labels[40..].iter().all(|&l| l == 1));
        assert_eq!(rec.subject_id, "S01");
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SyntheticConfig {
            n_subjects: 2,
            ..Default::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        let bits = |r: &[SignalRecord]| -> Vec<u64> {
            r.iter().flat_map(|x| x.samples.iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = generate_synthetic(&SyntheticConfig { rng_seed: 43, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn decimation_keeps_every_kth() {
        let rec = SignalRecord::new(
            "x",
            Device::Chest,
            8.0,
            (0..16).map(|i| i as f64).collect(),
            vec![0; 16],
        )
        .unwrap();
        let d = rec.decimate(4, Device::Wrist).unwrap();
        assert_eq!(d.samples, vec![0.0, 4.0, 8.0, 12.0]);
        assert_eq!(d.sampling_rate_hz, 2.0);
    }
}
