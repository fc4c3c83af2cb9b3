//! User-dependent and user-independent evaluation regimes and the per-subject
//! balanced-accuracy score table they produce.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::WindowFeatures;
use crate::learners::{default_grid, grid_search, Family, Hyperparams, LearnerOptions};
use crate::rng;

pub use crate::metrics::balanced_accuracy;

/// Share of each class held out in the user-dependent split.
pub const DEFAULT_TEST_FRAC: f64 = 0.286;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    UserDependent,
    UserIndependent,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::UserDependent => "user_dependent",
            Protocol::UserIndependent => "user_independent",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "user_dependent" | "ud" => Ok(Protocol::UserDependent),
            "user_independent" | "ui" => Ok(Protocol::UserIndependent),
            other => Err(Error::Config(format!("unknown protocol '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BAScore {
    pub dataset: String,
    pub subject_id: String,
    pub family: Family,
    pub protocol: Protocol,
    pub balanced_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    StratifiedHoldout,
    Logo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub strategy: SplitStrategy,
    /// Subject whose windows form the test set (LOGO) or who owns the split.
    pub subject_id: String,
}

/// Holds out `round(test_frac · n_c)` windows of each class (at least one),
/// chosen uniformly given the seed. Indices refer to `labels`.
pub fn stratified_split(labels: &[u8], subject_id: &str, test_frac: f64, seed: u64) -> Result<SplitPlan> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::Config(format!("test fraction must lie in (0,1), got {test_frac}")));
    }
    let mut r = rng::stream(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if rows.len() < 2 {
            return Err(Error::Protocol(format!(
                "subject {subject_id} has {} window(s) of class {class}, need at least 2",
                rows.len()
            )));
        }
        let n_test = ((test_frac * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        rng::shuffle(&mut r, &mut rows);
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan {
        train,
        test,
        strategy: SplitStrategy::StratifiedHoldout,
        subject_id: subject_id.to_string(),
    })
}

/// One plan per distinct subject, in subject-id order; `subjects[i]` is the
/// owner of row `i`.
pub fn logo_splits<S: AsRef<str>>(subjects: &[S]) -> Result<Vec<SplitPlan>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in subjects.iter().enumerate() {
        groups.entry(s.as_ref()).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::Protocol(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            groups.len()
        )));
    }
    Ok(groups
        .iter()
        .map(|(&subject, test)| SplitPlan {
            train: (0..subjects.len()).filter(|&i| subjects[i].as_ref() != subject).collect(),
            test: test.clone(),
            strategy: SplitStrategy::Logo,
            subject_id: subject.to_string(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub dataset: String,
    pub subject_id: String,
    pub family: Option<Family>,
    pub protocol: Protocol,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub dataset: String,
    pub families: Vec<Family>,
    pub options: LearnerOptions,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            dataset: "dataset".into(),
            families: Family::ALL.to_vec(),
            options: LearnerOptions::default(),
            test_frac: DEFAULT_TEST_FRAC,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub scores: Vec<BAScore>,
    pub skips: Vec<SkipEntry>,
}

impl Evaluation {
    pub fn extend(&mut self, other: Evaluation) {
        self.scores.extend(other.scores);
        self.skips.extend(other.skips);
        self.sort();
    }

    /// Canonical order: dataset, subject, family, protocol.
    pub fn sort(&mut self) {
        self.scores.sort_by(|a, b| {
            (&a.dataset, &a.subject_id, a.family, a.protocol).cmp(&(&b.dataset, &b.subject_id, b.family, b.protocol))
        });
        self.skips.sort_by(|a, b| {
            (&a.dataset, &a.subject_id, a.family, a.protocol).cmp(&(&b.dataset, &b.subject_id, b.family, b.protocol))
        });
    }

    pub fn scores_for(&self, protocol: Protocol) -> Vec<f64> {
        self.scores
            .iter()
            .filter(|s| s.protocol == protocol)
            .map(|s| s.balanced_accuracy)
            .collect()
    }
}

fn matrix(rows: &[&WindowFeatures]) -> Result<Array2<f64>> {
    let d = rows.first().map_or(0, |r| r.features.len());
    if rows.iter().any(|r| r.features.len() != d) {
        return Err(Error::Contract("feature rows differ in dimensionality".into()));
    }
    Ok(Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i].features[j]))
}

fn family_index(f: Family) -> u64 {
    Family::ALL.iter().position(|&g| g == f).unwrap_or(0) as u64
}

/// Errors that disqualify one subject/family cell rather than the whole run.
fn is_skippable(e: &Error) -> bool {
    matches!(e, Error::Protocol(_) | Error::Metric(_) | Error::Numeric { .. })
}

fn fit_and_score(
    grid: &[Hyperparams],
    options: LearnerOptions,
    train: &[&WindowFeatures],
    test: &[&WindowFeatures],
    seed: u64,
) -> Result<f64> {
    let xtr = matrix(train)?;
    let ytr: Vec<u8> = train.iter().map(|r| r.label).collect();
    let model = grid_search(grid, options, xtr.view(), &ytr, seed)?;
    let xte = matrix(test)?;
    let yte: Vec<u8> = test.iter().map(|r| r.label).collect();
    balanced_accuracy(&yte, &model.predict(xte.view())?)
}

fn group_by_subject(rows: &[WindowFeatures]) -> BTreeMap<&str, Vec<&WindowFeatures>> {
    let mut groups: BTreeMap<&str, Vec<&WindowFeatures>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.subject_id.as_str()).or_default().push(r);
    }
    groups
}

fn record_cell(
    out: &mut Evaluation,
    config: &EvaluationConfig,
    subject: &str,
    family: Family,
    protocol: Protocol,
    result: Result<f64>,
) -> Result<()> {
    match result {
        Ok(ba) => out.scores.push(BAScore {
            dataset: config.dataset.clone(),
            subject_id: subject.to_string(),
            family,
            protocol,
            balanced_accuracy: ba,
        }),
        Err(e) if is_skippable(&e) => {
            log::info!("skipping {subject} / {family} ({protocol}): {e}");
            out.skips.push(SkipEntry {
                dataset: config.dataset.clone(),
                subject_id: subject.to_string(),
                family: Some(family),
                protocol,
                reason: e.to_string(),
            });
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

/// Per subject: stratified holdout, grid search on the training part, balanced
/// accuracy on the held-out part.
pub fn run_user_dependent(rows: &[WindowFeatures], config: &EvaluationConfig) -> Result<Evaluation> {
    let groups = group_by_subject(rows);
    let parts: Vec<Evaluation> = groups
        .par_iter()
        .map(|(&subject, windows)| -> Result<Evaluation> {
            let mut out = Evaluation::default();
            let subject_seed = rng::derive_seed(config.seed, &[rng::stable_hash(subject)]);
            let labels: Vec<u8> = windows.iter().map(|r| r.label).collect();
            let plan = match stratified_split(&labels, subject, config.test_frac, rng::derive_seed(subject_seed, &[0])) {
                Ok(p) => p,
                Err(e) if is_skippable(&e) => {
                    out.skips.push(SkipEntry {
                        dataset: config.dataset.clone(),
                        subject_id: subject.to_string(),
                        family: None,
                        protocol: Protocol::UserDependent,
                        reason: e.to_string(),
                    });
                    return Ok(out);
                }
                Err(e) => return Err(e),
            };
            let train: Vec<&WindowFeatures> = plan.train.iter().map(|&i| windows[i]).collect();
            let test: Vec<&WindowFeatures> = plan.test.iter().map(|&i| windows[i]).collect();
            for &family in &config.families {
                let seed = rng::derive_seed(subject_seed, &[1, family_index(family)]);
                let result = fit_and_score(&default_grid(family), config.options, &train, &test, seed);
                record_cell(&mut out, config, subject, family, Protocol::UserDependent, result)?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut all = Evaluation::default();
    for p in parts {
        all.extend(p);
    }
    Ok(all)
}

/// Leave-one-subject-out: grid search on the pooled windows of all other
/// subjects, balanced accuracy on the held-out subject.
pub fn run_user_independent(rows: &[WindowFeatures], config: &EvaluationConfig) -> Result<Evaluation> {
    let subjects: Vec<&str> = rows.iter().map(|r| r.subject_id.as_str()).collect();
    let plans = logo_splits(&subjects)?;
    let parts: Vec<Evaluation> = plans
        .par_iter()
        .map(|plan| -> Result<Evaluation> {
            let mut out = Evaluation::default();
            let subject = plan.subject_id.as_str();
            let train: Vec<&WindowFeatures> = plan.train.iter().map(|&i| &rows[i]).collect();
            let test: Vec<&WindowFeatures> = plan.test.iter().map(|&i| &rows[i]).collect();
            let held_out: Vec<u8> = test.iter().map(|r| r.label).collect();
            if !held_out.contains(&0) || !held_out.contains(&1) {
                out.skips.push(SkipEntry {
                    dataset: config.dataset.clone(),
                    subject_id: subject.to_string(),
                    family: None,
                    protocol: Protocol::UserIndependent,
                    reason: "held-out subject has a single class".into(),
                });
                return Ok(out);
            }
            let subject_seed = rng::derive_seed(config.seed, &[rng::stable_hash(subject)]);
            for &family in &config.families {
                let seed = rng::derive_seed(subject_seed, &[2, family_index(family)]);
                let result = fit_and_score(&default_grid(family), config.options, &train, &test, seed);
                record_cell(&mut out, config, subject, family, Protocol::UserIndependent, result)?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut all = Evaluation::default();
    for p in parts {
        all.extend(p);
    }
    Ok(all)
}

pub const SCORE_CSV_HEADER: &str = "dataset,subject_id,family,protocol,balanced_accuracy";

pub fn write_scores_csv(scores: &[BAScore], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SCORE_CSV_HEADER.split(','))?;
    for s in scores {
        w.write_record([
            s.dataset.as_str(),
            s.subject_id.as_str(),
            s.family.as_str(),
            s.protocol.as_str(),
            &crate::ingest::format_sig12(s.balanced_accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<BAScore>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.join(",") != SCORE_CSV_HEADER {
        return Err(Error::Schema(format!("score table header must be '{SCORE_CSV_HEADER}'")));
    }
    let mut out = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = idx + 2;
        let parse_err = |message: String| Error::Parse { line, message };
        let ba: f64 = rec[4]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("invalid balanced accuracy '{}'", &rec[4])))?;
        if !(0.0..=1.0).contains(&ba) {
            return Err(parse_err(format!("balanced accuracy {ba} outside [0,1]")));
        }
        out.push(BAScore {
            dataset: rec[0].to_string(),
            subject_id: rec[1].to_string(),
            family: Family::parse(&rec[2]).map_err(|e| parse_err(e.to_string()))?,
            protocol: rec[3].parse().map_err(|e: Error| parse_err(e.to_string()))?,
            balanced_accuracy: ba,
        });
    }
    Ok(out)
}

/// Checks the one-score-per-cell invariant.
pub fn check_unique(scores: &[BAScore]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for s in scores {
        if !seen.insert((&s.dataset, &s.subject_id, s.family, s.protocol)) {
            return Err(Error::Audit(format!(
                "duplicate score for {}/{}/{}/{}",
                s.dataset, s.subject_id, s.family, s.protocol
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stratified_split_examples() {
        let mut labels = vec![0u8; 70];
        labels.extend([1u8; 30]);
        let p = stratified_split(&labels, "s", DEFAULT_TEST_FRAC, 1).unwrap();
        assert_eq!(p.test.len(), 29);
        assert_eq!(p.test.iter().filter(|&&i| labels[i] == 1).count(), 9);
        assert_eq!(p, stratified_split(&labels, "s", DEFAULT_TEST_FRAC, 1).unwrap());

        let labels: Vec<u8> = [0u8; 7].iter().chain(&[1u8; 7]).copied().collect();
        let p = stratified_split(&labels, "s", DEFAULT_TEST_FRAC, 2).unwrap();
        assert_eq!(p.test.len(), 4);

        let err = stratified_split(&[0, 0, 0, 1], "S07", DEFAULT_TEST_FRAC, 0).unwrap_err();
        assert!(matches!(&err, Error::Protocol(m) if m.contains("S07")));
    }

    #[test]
    fn logo_examples() {
        let subjects = ["B", "A", "C", "A", "B"];
        let plans = logo_splits(&subjects).unwrap();
        assert_eq!(plans.len(), 3);
        assert_eq!(plans[0].subject_id, "A");
        assert_eq!(plans[0].test, vec![1, 3]);
        for p in &plans {
            let mut all: Vec<usize> = p.train.iter().chain(&p.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..5).collect::<Vec<_>>());
            assert!(p.train.iter().all(|&i| subjects[i] != p.subject_id));
        }
        assert!(matches!(logo_splits(&["A", "A"]), Err(Error::Protocol(_))));
    }

    #[test]
    fn score_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let scores = vec![BAScore {
            dataset: "d".into(),
            subject_id: "S01".into(),
            family: Family::Svm,
            protocol: Protocol::UserIndependent,
            balanced_accuracy: 0.8125,
        }];
        write_scores_csv(&scores, &path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with(SCORE_CSV_HEADER));
        assert_eq!(read_scores_csv(&path).unwrap(), scores);
        check_unique(&scores).unwrap();
        let doubled = [scores.clone(), scores].concat();
        assert!(matches!(check_unique(&doubled), Err(Error::Audit(_))));
    }

    proptest! {
        #[test]
        fn split_ratio_within_one_over_class_size(n0 in 2usize..80, n1 in 2usize..80, seed in 0u64..1000) {
            let labels: Vec<u8> = std::iter::repeat(0).take(n0).chain(std::iter::repeat(1).take(n1)).collect();
            let p = stratified_split(&labels, "s", DEFAULT_TEST_FRAC, seed).unwrap();
            let t1 = p.test.iter().filter(|&&i| labels[i] == 1).count() as f64;
            let t0 = p.test.len() as f64 - t1;
            let full = n1 as f64 / (n0 + n1) as f64;
            let got = t1 / (t0 + t1);
            prop_assert!((got - full).abs() <= 1.0 / n0.min(n1) as f64 + 1e-12);
            let mut all: Vec<usize> = p.train.iter().chain(&p.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        }

        #[test]
        fn ba_is_label_swap_invariant(pairs in proptest::collection::vec((0u8..2, 0u8..2), 2..200)) {
            let t: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let q: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(t.contains(&0) && t.contains(&1));
            let ts: Vec<u8> = t.iter().map(|v| 1 - v).collect();
            let qs: Vec<u8> = q.iter().map(|v| 1 - v).collect();
            prop_assert_eq!(balanced_accuracy(&t, &q).unwrap(), balanced_accuracy(&ts, &qs).unwrap());
        }
    }
}
