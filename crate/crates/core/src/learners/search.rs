//! Stratified k-fold cross-validation and exhaustive grid search.

use std::collections::HashMap;

use ndarray::ArrayView2;
use rayon::prelude::*;

use super::{forest::ForestParams, select_rows, train, ClassWeightMode, FittedParams, Hyperparams, LearnerOptions, ModelSpec, TrainedModel};
use crate::error::{Error, Result};
use crate::metrics::balanced_accuracy;
use crate::rng;

pub const DEFAULT_FOLDS: usize = 5;
pub const FALLBACK_FOLDS: usize = 3;

/// Fold count for `y`: 5 when every class has at least 5 rows, otherwise 3.
/// The flag reports whether the fallback was taken.
pub fn fold_count(y: &[u8]) -> Result<(usize, bool)> {
    let n1 = y.iter().filter(|&&l| l == 1).count();
    let smallest = n1.min(y.len() - n1);
    if smallest >= DEFAULT_FOLDS {
        Ok((DEFAULT_FOLDS, false))
    } else if smallest >= FALLBACK_FOLDS {
        Ok((FALLBACK_FOLDS, true))
    } else {
        Err(Error::Protocol(format!(
            "cross-validation needs at least {FALLBACK_FOLDS} rows per class, smallest class has {smallest}"
        )))
    }
}

/// Test-fold row indices (each sorted). Rows of each class are shuffled and
/// dealt round-robin, continuing the deal from one class to the next so fold
/// sizes differ by at most one.
pub fn stratified_kfold(y: &[u8], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut r = rng::stream(seed);
    let k = k.max(1);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        rng::shuffle(&mut r, &mut rows);
        for i in rows {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

/// Forests that differ only in tree count share their fit: the smaller one
/// is a prefix of the larger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct ForestKey {
    split_at: usize,
    leaf: usize,
    class_weight: ClassWeightMode,
}

fn forest_key(h: &Hyperparams) -> Option<(ForestKey, usize)> {
    match *h {
        Hyperparams::Rf {
            n_estimators,
            min_samples_split,
            min_samples_leaf,
            class_weight,
        } => {
            let p = ForestParams {
                n_estimators,
                min_samples_split,
                min_samples_leaf,
            };
            Some((
                ForestKey {
                    split_at: p.effective_split(),
                    leaf: min_samples_leaf.max(1),
                    class_weight,
                },
                n_estimators,
            ))
        }
        _ => None,
    }
}

/// Balanced accuracy of every grid point on one train/test split. `None`
/// marks a grid point whose fit failed numerically.
fn score_fold(
    grid: &[Hyperparams],
    options: LearnerOptions,
    x: ArrayView2<'_, f64>,
    y: &[u8],
    test: &[usize],
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    let mut is_test = vec![false; y.len()];
    for &i in test {
        is_test[i] = true;
    }
    let train_rows: Vec<usize> = (0..y.len()).filter(|&i| !is_test[i]).collect();
    let xtr = select_rows(x, &train_rows);
    let ytr: Vec<u8> = train_rows.iter().map(|&i| y[i]).collect();
    let xte = select_rows(x, test);
    let yte: Vec<u8> = test.iter().map(|&i| y[i]).collect();

    let mut largest: HashMap<ForestKey, usize> = HashMap::new();
    for h in grid {
        if let Some((key, n)) = forest_key(h) {
            let e = largest.entry(key).or_insert(0);
            *e = (*e).max(n);
        }
    }
    let mut forests: HashMap<ForestKey, TrainedModel> = HashMap::new();
    let mut out = Vec::with_capacity(grid.len());
    for h in grid {
        let spec = ModelSpec { params: *h, options };
        let fitted = match forest_key(h) {
            Some((key, n_trees)) => {
                if !forests.contains_key(&key) {
                    let mut big = *h;
                    if let Hyperparams::Rf { n_estimators, .. } = &mut big {
                        *n_estimators = largest[&key];
                    }
                    let m = train(&ModelSpec { params: big, options }, xtr.view(), &ytr, seed)?;
                    forests.insert(key, m);
                }
                match &forests[&key].params {
                    FittedParams::Forest(f) => Ok(f.predict(xte.view(), n_trees)),
                    _ => unreachable!("forest key maps to a forest"),
                }
            }
            None => train(&spec, xtr.view(), &ytr, seed).and_then(|m| m.predict(xte.view())),
        };
        match fitted {
            Ok(pred) => out.push(Some(balanced_accuracy(&yte, &pred)?)),
            Err(Error::Numeric { grid_point, message }) => {
                log::warn!("grid point {grid_point} failed: {message}");
                out.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Scores every grid point by stratified k-fold balanced accuracy, picks the
/// best (earliest on ties) and refits it on all rows.
pub fn grid_search(
    grid: &[Hyperparams],
    options: LearnerOptions,
    x: ArrayView2<'_, f64>,
    y: &[u8],
    seed: u64,
) -> Result<TrainedModel> {
    let Some(first) = grid.first() else {
        return Err(Error::Config("empty hyperparameter grid".into()));
    };
    if grid.iter().any(|h| h.family() != first.family()) {
        return Err(Error::Config("grid mixes model families".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::Contract(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    let (k, fallback) = fold_count(y)?;
    let folds = stratified_kfold(y, k, rng::derive_seed(seed, &[1]));
    let per_fold: Vec<Vec<Option<f64>>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| score_fold(grid, options, x, y, test, rng::derive_seed(seed, &[3, f as u64])))
        .collect::<Result<_>>()?;

    let mut cv_scores = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for g in 0..grid.len() {
        let fold_scores: Option<Vec<f64>> = per_fold.iter().map(|s| s[g]).collect();
        let score = fold_scores.map_or(f64::NAN, |s| s.iter().sum::<f64>() / s.len() as f64);
        cv_scores.push(score);
        if score.is_finite() && best.map_or(true, |(_, b)| score > b) {
            best = Some((g, score));
        }
    }
    let Some((index, score)) = best else {
        return Err(Error::Numeric {
            grid_point: format!("all {} {} grid points", grid.len(), first.family()),
            message: "every grid point failed to fit".into(),
        });
    };
    let spec = ModelSpec {
        params: grid[index],
        options,
    };
    let mut model = train(&spec, x, y, rng::derive_seed(seed, &[2]))?;
    model.metadata.selected_index = Some(index);
    model.metadata.cv_balanced_accuracy = Some(score);
    model.metadata.cv_scores = cv_scores;
    model.metadata.cv_folds = Some(k);
    model.metadata.fold_fallback = fallback;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{default_grid, Family, KnnWeights};
    use ndarray::Array2;

    fn blobs(seed: u64, n: usize, gap: f64) -> (Array2<f64>, Vec<u8>) {
        let mut r = rng::stream(seed);
        let y: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
        let x = Array2::from_shape_fn((n, 3), |(i, _)| rng::standard_normal(&mut r) + gap * y[i] as f64);
        (x, y)
    }

    #[test]
    fn folds_partition_and_stratify() {
        let y: Vec<u8> = (0..37).map(|i| u8::from(i % 4 == 0)).collect();
        let folds = stratified_kfold(&y, 5, 7);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        let n1 = y.iter().filter(|&&l| l == 1).count();
        for f in &folds {
            let c1 = f.iter().filter(|&&i| y[i] == 1).count();
            assert!(c1 == n1 / 5 || c1 == n1 / 5 + 1);
        }
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn fold_fallback_rules() {
        assert_eq!(fold_count(&[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]).unwrap(), (5, false));
        assert_eq!(fold_count(&[0, 0, 0, 0, 0, 1, 1, 1]).unwrap(), (3, true));
        assert!(matches!(fold_count(&[0, 0, 0, 1, 1]), Err(Error::Protocol(_))));
    }

    #[test]
    fn single_point_grid_is_selected() {
        let (x, y) = blobs(1, 40, 3.0);
        let grid = [Hyperparams::Knn {
            n_neighbors: 3,
            weights: KnnWeights::Uniform,
        }];
        let m = grid_search(&grid, LearnerOptions::default(), x.view(), &y, 0).unwrap();
        assert_eq!(m.metadata.selected_index, Some(0));
        assert_eq!(m.metadata.cv_scores.len(), 1);
        assert_eq!(m.metadata.cv_folds, Some(5));
    }

    #[test]
    fn lr_grid_scores_all_sixteen_points_deterministically() {
        let (x, y) = blobs(2, 45, 1.0);
        let grid = default_grid(Family::Lr);
        let a = grid_search(&grid, LearnerOptions::default(), x.view(), &y, 5).unwrap();
        let b = grid_search(&grid, LearnerOptions::default(), x.view(), &y, 5).unwrap();
        assert_eq!(a.metadata.cv_scores.len(), 16);
        assert_eq!(a, b);
        let best = a.metadata.cv_balanced_accuracy.unwrap();
        let first_best = a.metadata.cv_scores.iter().position(|&s| s == best).unwrap();
        assert_eq!(a.metadata.selected_index, Some(first_best));
    }

    #[test]
    fn shared_forest_scores_match_separate_fits() {
        let (x, y) = blobs(3, 30, 1.5);
        let small = |n| Hyperparams::Rf {
            n_estimators: n,
            min_samples_split: 2,
            min_samples_leaf: 1,
            class_weight: ClassWeightMode::None,
        };
        let test: Vec<usize> = (0..30).step_by(5).collect();
        let opts = LearnerOptions::default();
        let joint = score_fold(&[small(10), small(25)], opts, x.view(), &y, &test, 4).unwrap();
        let alone = score_fold(&[small(10)], opts, x.view(), &y, &test, 4).unwrap();
        assert_eq!(joint[0], alone[0]);
    }
}
