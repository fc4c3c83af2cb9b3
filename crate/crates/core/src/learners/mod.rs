//! Classifier families, their hyperparameter grids and grid-search selection.
//!
//! Every family trains on an `n × d` feature matrix with 0/1 labels. SVM, MLP
//! and KNN see standardized features (statistics fitted on the training rows
//! only); LR and RF see raw features.

use std::fmt;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod forest;
pub mod knn;
pub mod logistic;
pub mod mlp;
pub mod search;
pub mod standardize;
pub mod svm;

pub use search::{grid_search, stratified_kfold};
pub use standardize::Standardizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "SVM")]
    Svm,
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "KNN")]
    Knn,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Lr, Family::Rf, Family::Svm, Family::Mlp, Family::Knn];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Lr => "LR",
            Family::Rf => "RF",
            Family::Svm => "SVM",
            Family::Mlp => "MLP",
            Family::Knn => "KNN",
        }
    }

    pub fn standardizes(&self) -> bool {
        matches!(self, Family::Svm | Family::Mlp | Family::Knn)
    }

    pub fn parse(s: &str) -> Result<Family> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LR" => Ok(Family::Lr),
            "RF" => Ok(Family::Rf),
            "SVM" => Ok(Family::Svm),
            "MLP" => Ok(Family::Mlp),
            "KNN" => Ok(Family::Knn),
            other => Err(Error::Config(format!("unknown model family '{other}'"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeightMode {
    None,
    Balance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnWeights {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum Hyperparams {
    #[serde(rename = "LR")]
    Lr { c: f64, class_weight: ClassWeightMode },
    #[serde(rename = "RF")]
    Rf {
        n_estimators: usize,
        min_samples_split: usize,
        min_samples_leaf: usize,
        class_weight: ClassWeightMode,
    },
    #[serde(rename = "SVM")]
    Svm { c: f64, class_weight: ClassWeightMode },
    #[serde(rename = "MLP")]
    Mlp { hidden_layer_size: usize },
    #[serde(rename = "KNN")]
    Knn { n_neighbors: usize, weights: KnnWeights },
}

impl Hyperparams {
    pub fn family(&self) -> Family {
        match self {
            Hyperparams::Lr { .. } => Family::Lr,
            Hyperparams::Rf { .. } => Family::Rf,
            Hyperparams::Svm { .. } => Family::Svm,
            Hyperparams::Mlp { .. } => Family::Mlp,
            Hyperparams::Knn { .. } => Family::Knn,
        }
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyperparams::Lr { c, class_weight } => write!(f, "LR(C={c}, class_weight={class_weight:?})"),
            Hyperparams::Rf {
                n_estimators,
                min_samples_split,
                min_samples_leaf,
                class_weight,
            } => write!(
                f,
                "RF(n_estimators={n_estimators}, min_samples_split={min_samples_split}, \
                 min_samples_leaf={min_samples_leaf}, class_weight={class_weight:?})"
            ),
            Hyperparams::Svm { c, class_weight } => write!(f, "SVM(C={c}, class_weight={class_weight:?})"),
            Hyperparams::Mlp { hidden_layer_size } => write!(f, "MLP(hidden_layer_sizes={hidden_layer_size})"),
            Hyperparams::Knn { n_neighbors, weights } => {
                write!(f, "KNN(n_neighbors={n_neighbors}, weights={weights:?})")
            }
        }
    }
}

pub const REGULARIZATION_GRID: [f64; 8] = [0.001, 0.01, 0.1, 0.25, 0.5, 0.75, 1.0, 10.0];
pub const CLASS_WEIGHT_GRID: [ClassWeightMode; 2] = [ClassWeightMode::None, ClassWeightMode::Balance];
pub const RF_N_ESTIMATORS_GRID: [usize; 2] = [500, 1000];
pub const RF_MIN_SAMPLES_SPLIT_GRID: [usize; 2] = [2, 4];
pub const RF_MIN_SAMPLES_LEAF_GRID: [usize; 2] = [1, 4];
pub const MLP_HIDDEN_GRID: [usize; 4] = [64, 128, 256, 512];
pub const KNN_NEIGHBORS_GRID: [usize; 3] = [3, 5, 7];
pub const KNN_WEIGHTS_GRID: [KnnWeights; 2] = [KnnWeights::Uniform, KnnWeights::Distance];

/// The hyperparameter grid of a family in declaration order (first parameter
/// varies slowest). Grid-search ties resolve to the earliest entry.
pub fn default_grid(family: Family) -> Vec<Hyperparams> {
    let mut grid = Vec::new();
    match family {
        Family::Lr | Family::Svm => {
            for c in REGULARIZATION_GRID {
                for class_weight in CLASS_WEIGHT_GRID {
                    grid.push(if family == Family::Lr {
                        Hyperparams::Lr { c, class_weight }
                    } else {
                        Hyperparams::Svm { c, class_weight }
                    });
                }
            }
        }
        Family::Rf => {
            for n_estimators in RF_N_ESTIMATORS_GRID {
                for min_samples_split in RF_MIN_SAMPLES_SPLIT_GRID {
                    for min_samples_leaf in RF_MIN_SAMPLES_LEAF_GRID {
                        for class_weight in CLASS_WEIGHT_GRID {
                            grid.push(Hyperparams::Rf {
                                n_estimators,
                                min_samples_split,
                                min_samples_leaf,
                                class_weight,
                            });
                        }
                    }
                }
            }
        }
        Family::Mlp => {
            grid.extend(MLP_HIDDEN_GRID.map(|h| Hyperparams::Mlp { hidden_layer_size: h }));
        }
        Family::Knn => {
            for n_neighbors in KNN_NEIGHBORS_GRID {
                for weights in KNN_WEIGHTS_GRID {
                    grid.push(Hyperparams::Knn { n_neighbors, weights });
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SvmKernel {
    Linear,
    /// Gaussian kernel with `gamma = 1 / (d · Var(X))`.
    Rbf,
}

/// Settings outside the hyperparameter grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerOptions {
    pub svm_kernel: SvmKernel,
    /// Balanced class weights in the MLP loss (the MLP grid has no such row).
    pub mlp_class_weight: bool,
}

impl Default for LearnerOptions {
    fn default() -> Self {
        LearnerOptions {
            svm_kernel: SvmKernel::Linear,
            mlp_class_weight: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub params: Hyperparams,
    pub options: LearnerOptions,
}

impl ModelSpec {
    pub fn new(params: Hyperparams) -> Self {
        ModelSpec {
            params,
            options: LearnerOptions::default(),
        }
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }

    pub fn standardize(&self) -> bool {
        self.family().standardizes()
    }

    pub fn class_weight_mode(&self) -> ClassWeightMode {
        match self.params {
            Hyperparams::Lr { class_weight, .. }
            | Hyperparams::Rf { class_weight, .. }
            | Hyperparams::Svm { class_weight, .. } => class_weight,
            Hyperparams::Mlp { .. } if self.options.mlp_class_weight => ClassWeightMode::Balance,
            Hyperparams::Mlp { .. } | Hyperparams::Knn { .. } => ClassWeightMode::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w0: f64,
    pub w1: f64,
}

impl ClassWeights {
    pub fn of(&self, label: u8) -> f64 {
        if label == 1 {
            self.w1
        } else {
            self.w0
        }
    }

    pub fn per_sample(&self, y: &[u8]) -> Vec<f64> {
        y.iter().map(|&l| self.of(l)).collect()
    }
}

/// `none` gives unit weights; `balance` gives `w_c = N / (2 · n_c)`.
pub fn compute_class_weights(labels: &[u8], mode: ClassWeightMode) -> Result<ClassWeights> {
    let n1 = labels.iter().filter(|&&l| l == 1).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::Protocol(format!(
            "class weights need both classes (n0={n0}, n1={n1})"
        )));
    }
    Ok(match mode {
        ClassWeightMode::None => ClassWeights { w0: 1.0, w1: 1.0 },
        ClassWeightMode::Balance => {
            let n = labels.len() as f64;
            ClassWeights {
                w0: n / (2.0 * n0 as f64),
                w1: n / (2.0 * n1 as f64),
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedParams {
    Logistic(logistic::LogisticModel),
    Forest(forest::Forest),
    Svm(svm::SvmModel),
    Mlp(mlp::MlpModel),
    Knn(knn::KnnModel),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub n_train: usize,
    pub n_features: usize,
    /// Index of the winning point in the searched grid.
    pub selected_index: Option<usize>,
    pub cv_balanced_accuracy: Option<f64>,
    pub cv_scores: Vec<f64>,
    pub cv_folds: Option<usize>,
    /// Set when 5-fold CV was infeasible and 3 folds were used.
    pub fold_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub standardizer: Option<Standardizer>,
    pub params: FittedParams,
    pub metadata: TrainingMetadata,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: TrainedModel,
}

fn check_training_inputs(x: ArrayView2<'_, f64>, y: &[u8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Contract(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if y.len() < 2 {
        return Err(Error::Protocol("need at least two training rows".into()));
    }
    if y.iter().any(|&l| l > 1) {
        return Err(Error::Contract("labels must be 0 or 1".into()));
    }
    if !y.contains(&0) || !y.contains(&1) {
        return Err(Error::Protocol("training labels hold a single class".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("training features must be finite".into()));
    }
    Ok(())
}

/// Fits one model at a fixed grid point.
pub fn train(spec: &ModelSpec, x: ArrayView2<'_, f64>, y: &[u8], seed: u64) -> Result<TrainedModel> {
    check_training_inputs(x, y)?;
    let weights = compute_class_weights(y, spec.class_weight_mode())?;
    let standardizer = spec.standardize().then(|| Standardizer::fit(x));
    let scaled;
    let xs = match &standardizer {
        Some(s) => {
            scaled = s.transform(x);
            scaled.view()
        }
        None => x,
    };
    let grid_point = spec.params.to_string();
    let params = match spec.params {
        Hyperparams::Lr { c, .. } => {
            FittedParams::Logistic(logistic::fit(xs, y, &weights, c).map_err(|e| with_grid_point(e, &grid_point))?)
        }
        Hyperparams::Svm { c, .. } => FittedParams::Svm(
            svm::fit(xs, y, &weights, c, spec.options.svm_kernel, seed).map_err(|e| with_grid_point(e, &grid_point))?,
        ),
        Hyperparams::Rf {
            n_estimators,
            min_samples_split,
            min_samples_leaf,
            ..
        } => FittedParams::Forest(forest::fit(
            xs,
            y,
            &weights,
            &forest::ForestParams {
                n_estimators,
                min_samples_split,
                min_samples_leaf,
            },
            seed,
        )),
        Hyperparams::Mlp { hidden_layer_size } => FittedParams::Mlp(
            mlp::fit(xs, y, &weights, hidden_layer_size, seed).map_err(|e| with_grid_point(e, &grid_point))?,
        ),
        Hyperparams::Knn { n_neighbors, weights } => FittedParams::Knn(knn::KnnModel::fit(xs, y, n_neighbors, weights)),
    };
    Ok(TrainedModel {
        spec: *spec,
        standardizer,
        params,
        metadata: TrainingMetadata {
            seed,
            n_train: y.len(),
            n_features: x.ncols(),
            ..Default::default()
        },
    })
}

fn with_grid_point(e: Error, grid_point: &str) -> Error {
    match e {
        Error::Numeric { message, .. } => Error::Numeric {
            grid_point: grid_point.to_string(),
            message,
        },
        other => other,
    }
}

impl TrainedModel {
    fn prepare(&self, x: ArrayView2<'_, f64>) -> Result<Option<Array2<f64>>> {
        if x.ncols() != self.metadata.n_features {
            return Err(Error::Contract(format!(
                "model expects {} features, got {}",
                self.metadata.n_features,
                x.ncols()
            )));
        }
        Ok(self.standardizer.as_ref().map(|s| s.transform(x)))
    }

    /// Probability-like score of the stress class, in [0,1].
    pub fn predict_score(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.nrows() == 0 {
            return Ok(Vec::new());
        }
        let prepared = self.prepare(x)?;
        let xs = prepared.as_ref().map(|a| a.view()).unwrap_or(x);
        Ok(match &self.params {
            FittedParams::Logistic(m) => m.predict_proba(xs),
            FittedParams::Forest(m) => m.predict_proba(xs, m.trees.len()),
            FittedParams::Svm(m) => m.decision(xs).into_iter().map(|d| if d > 0.0 { 1.0 } else { 0.0 }).collect(),
            FittedParams::Mlp(m) => m.predict_proba(xs),
            FittedParams::Knn(m) => m.predict_score(xs),
        })
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<u8>> {
        if x.nrows() == 0 {
            return Ok(Vec::new());
        }
        let prepared = self.prepare(x)?;
        let xs = prepared.as_ref().map(|a| a.view()).unwrap_or(x);
        Ok(match &self.params {
            FittedParams::Logistic(m) => m.predict(xs),
            FittedParams::Forest(m) => m.predict(xs, m.trees.len()),
            FittedParams::Svm(m) => m.predict(xs),
            FittedParams::Mlp(m) => m.predict(xs),
            FittedParams::Knn(m) => m.predict(xs),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(file.model)
    }
}

/// Copies the given rows of `x` into a new matrix.
pub fn select_rows(x: ArrayView2<'_, f64>, rows: &[usize]) -> Array2<f64> {
    x.select(ndarray::Axis(0), rows)
}
