use ndarray::Array2;
use proptest::prelude::*;
use stresslab::features::{extract_dataset, extract_record, ExtractionConfig};
use stresslab::ingest::{alternating_plan, generate_synthetic, Device, Segment, SignalRecord, SyntheticConfig};
use stresslab::learners::{train, ClassWeightMode, Family, Hyperparams, ModelSpec};
use stresslab::protocol::{logo_splits, run_user_dependent, run_user_independent, EvaluationConfig, Protocol};
use stresslab::rng;

fn small_corpus() -> SyntheticConfig {
    SyntheticConfig {
        n_subjects: 3,
        segments: alternating_plan(180.0, 2),
        rng_seed: 5,
        ..SyntheticConfig::default()
    }
}

#[test]
fn repeated_runs_give_identical_scores() {
    let run = || {
        let records = generate_synthetic(&small_corpus()).unwrap();
        let (rows, _) = extract_dataset(&records, &ExtractionConfig::default()).unwrap();
        let config = EvaluationConfig {
            families: vec![Family::Lr, Family::Knn],
            seed: 9,
            ..EvaluationConfig::default()
        };
        let mut eval = run_user_dependent(&rows, &config).unwrap();
        eval.extend(run_user_independent(&rows, &config).unwrap());
        eval
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    assert_eq!(a.scores.len(), 3 * 2 * 2);
    assert!(a.scores.iter().all(|s| (0.0..=1.0).contains(&s.balanced_accuracy)));
    assert_eq!(a.scores_for(Protocol::UserDependent).len(), 6);
}

#[test]
fn five_minute_record_yields_nine_windows() {
    let config = SyntheticConfig {
        n_subjects: 1,
        sampling_rate_hz: 4.0,
        segments: vec![Segment {
            stress: false,
            duration_s: 300.0,
        }],
        ..SyntheticConfig::default()
    };
    let record = &generate_synthetic(&config).unwrap()[0];
    let (rows, log) = extract_record(record, &ExtractionConfig::default()).unwrap();
    assert_eq!(rows.len(), 9);
    assert!(!log.filtered);
    assert_eq!(rows[8].t_start_s, 240.0);
}

#[test]
fn chest_rate_is_filtered() {
    let n = 700 * 120;
    let record = SignalRecord::new("C1", Device::Chest, 700.0, vec![3.0; n], vec![0; n]).unwrap();
    let (rows, log) = extract_record(&record, &ExtractionConfig::default()).unwrap();
    assert!(log.filtered);
    assert_eq!(rows.len(), 3);
}

proptest! {
    #[test]
    fn logo_folds_are_disjoint_and_cover(owners in prop::collection::vec(0u8..6, 2..80)) {
        let subjects: Vec<String> = owners.iter().map(|o| format!("S{o}")).collect();
        let distinct: std::collections::BTreeSet<&String> = subjects.iter().collect();
        let plans = logo_splits(&subjects);
        if distinct.len() < 2 {
            prop_assert!(plans.is_err());
            return Ok(());
        }
        let plans = plans.unwrap();
        prop_assert_eq!(plans.len(), distinct.len());
        let mut seen = vec![0usize; subjects.len()];
        for p in &plans {
            for &i in &p.test {
                prop_assert_eq!(&subjects[i], &p.subject_id);
                seen[i] += 1;
            }
            for &i in &p.train {
                prop_assert_ne!(&subjects[i], &p.subject_id);
            }
            prop_assert_eq!(p.train.len() + p.test.len(), subjects.len());
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }
}

fn minority_recall(mode: ClassWeightMode, seed: u64) -> f64 {
    // 15% minority, classes one standard deviation apart on each of 3 axes.
    let sample = |n: usize, r: &mut rng::StreamRng| {
        let y: Vec<u8> = (0..n).map(|i| u8::from(i % 20 < 3)).collect();
        let x = Array2::from_shape_fn((n, 3), |(i, _)| f64::from(y[i]) + rng::standard_normal(r));
        (x, y)
    };
    let mut r = rng::stream(seed);
    let (xtr, ytr) = sample(200, &mut r);
    let (xte, yte) = sample(400, &mut r);
    let spec = ModelSpec::new(Hyperparams::Lr { c: 1.0, class_weight: mode });
    let model = train(&spec, xtr.view(), &ytr, seed).unwrap();
    let pred = model.predict(xte.view()).unwrap();
    let pos = yte.iter().filter(|&&l| l == 1).count();
    let hit = yte.iter().zip(&pred).filter(|&(&t, &p)| t == 1 && p == 1).count();
    hit as f64 / pos as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

#[test]
fn balanced_weights_do_not_hurt_minority_recall() {
    let none = median((0..20).map(|s| minority_recall(ClassWeightMode::None, s)).collect());
    let balance = median((0..20).map(|s| minority_recall(ClassWeightMode::Balance, s)).collect());
    assert!(balance >= none, "balance {balance}, none {none}");
}
