use std::fs;
use std::path::Path;

use proptest::prelude::*;
use stresslab::features::{decompose, detect_scr_events};
use stresslab::ingest::{
    alternating_plan, convert_export, generate_synthetic, load_canonical, threshold_labels, write_canonical,
    ContinuousStressLabel, Device, ExportKind, SignalRecord, SyntheticConfig,
};
use stresslab::{Error, ErrorClass};

fn write_pair(dir: &Path, csv: &str, n_samples: usize) -> std::path::PathBuf {
    let path = dir.join("S1_wrist.csv");
    fs::write(&path, csv).unwrap();
    fs::write(
        dir.join("S1_wrist.json"),
        format!(r#"{{"subject_id":"S1","device":"wrist","sampling_rate_hz":4.0,"n_samples":{n_samples}}}"#),
    )
    .unwrap();
    path
}

#[test]
fn three_row_file_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pair(dir.path(), "t_s,eda_us,label\n0,1.5,0\n0.25,1.6,0\n0.5,1.7,1\n", 3);
    let r = load_canonical(&path).unwrap();
    assert_eq!(r.subject_id, "S1");
    assert_eq!(r.device, Device::Wrist);
    assert_eq!(r.sampling_rate_hz, 4.0);
    assert_eq!(r.samples, vec![1.5, 1.6, 1.7]);
    assert_eq!(r.labels, vec![0, 0, 1]);
}

#[test]
fn non_numeric_cell_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pair(dir.path(), "t_s,eda_us,label\n0,1.5,0\n0.25,abc,0\n0.5,1.7,1\n", 3);
    match load_canonical(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn sidecar_length_mismatch_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pair(dir.path(), "t_s,eda_us,label\n0,1.5,0\n0.25,1.6,0\n", 3);
    let err = load_canonical(&path).unwrap_err();
    assert!(matches!(err, Error::Schema(_)), "{err:?}");
    assert_eq!(err.class(), ErrorClass::Data);
}

#[test]
fn decreasing_time_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pair(dir.path(), "t_s,eda_us,label\n0.5,1.5,0\n0.25,1.6,0\n", 2);
    assert!(matches!(load_canonical(&path), Err(Error::Schema(_))));
}

#[test]
fn wesad_export_keeps_only_protocol_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("S2_wrist.csv");
    fs::write(&path, "eda,label\n1.0,0\n1.1,1\n1.2,2\n1.3,3\n1.4,4\n1.5,6\n1.6,2\n").unwrap();
    let r = convert_export(&path, "S2", Device::Wrist, 4.0, ExportKind::Wesad).unwrap();
    assert_eq!(r.samples, vec![1.1, 1.2, 1.3, 1.4, 1.6]);
    assert_eq!(r.labels, vec![0, 1, 0, 0, 1]);
}

#[test]
fn affective_road_export_binarizes_ratings() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("D1_finger.csv");
    fs::write(&path, "eda,stress\n2.0,0.1\n2.1,0.5\n2.2,0.9\n").unwrap();
    let r = convert_export(&path, "D1", Device::Finger, 4.0, ExportKind::AffectiveRoad { threshold: 0.5 }).unwrap();
    assert_eq!(r.labels, vec![0, 1, 1]);
}

proptest! {
    #[test]
    fn canonical_round_trip_keeps_twelve_digits(
        samples in prop::collection::vec(-1e3f64..1e3, 1..60),
        fs in prop::sample::select(vec![4.0, 5.0, 32.0, 700.0]),
    ) {
        let labels: Vec<u8> = (0..samples.len()).map(|i| (i % 3 == 0) as u8).collect();
        let record = SignalRecord::new("P1", Device::Chest, fs, samples, labels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_canonical(&record, dir.path()).unwrap();
        let back = load_canonical(&path).unwrap();
        prop_assert_eq!(&back.labels, &record.labels);
        prop_assert_eq!(back.sampling_rate_hz, fs);
        for (a, b) in back.samples.iter().zip(&record.samples) {
            prop_assert!((a - b).abs() <= 1e-11 * b.abs().max(1e-300), "{} vs {}", a, b);
        }
    }

    #[test]
    fn raising_the_threshold_never_adds_stress(
        values in prop::collection::vec(0.0f64..=1.0, 1..100),
        t1 in 0.01f64..0.99,
        t2 in 0.01f64..0.99,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = threshold_labels(&ContinuousStressLabel::with_threshold(values.clone(), lo)).unwrap();
        let b = threshold_labels(&ContinuousStressLabel::with_threshold(values, hi)).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x >= y));
    }
}

/// Stress segments carry six times the event rate; the detector should see
/// at least twice as many responses there. Noise is off because white noise
/// at 0.01 µS already clears the detection threshold on its own.
#[test]
fn detected_responses_follow_the_event_rate() {
    let mut stress = 0usize;
    let mut calm = 0usize;
    for seed in 0..20 {
        let config = SyntheticConfig {
            n_subjects: 1,
            segments: alternating_plan(600.0, 1),
            stress_event_rate_per_min: 12.0,
            nonstress_event_rate_per_min: 2.0,
            noise_std: 0.0,
            rng_seed: seed,
            ..SyntheticConfig::default()
        };
        let record = &generate_synthetic(&config).unwrap()[0];
        let parts = decompose(&record.samples, record.sampling_rate_hz).unwrap();
        for e in detect_scr_events(&parts.phasic, record.sampling_rate_hz) {
            if record.labels[e.peak_index] == 1 {
                stress += 1;
            } else {
                calm += 1;
            }
        }
    }
    assert!(calm > 0);
    let ratio = stress as f64 / calm as f64;
    assert!(ratio > 2.0, "stress {stress}, non-stress {calm}, ratio {ratio}");
}
