//! Soft-margin SVM with per-class weights, trained by dual coordinate descent.
//!
//! The bias is folded into the kernel as a constant feature (`K + 1`), so it
//! is regularized along with the weights. The linear kernel keeps the primal
//! weight vector; the Gaussian kernel keeps the full Gram matrix.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{ClassWeights, SvmKernel};
use crate::error::{Error, Result};
use crate::rng;

pub const MAX_EPOCHS: usize = 1000;
pub const DUAL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "lowercase")]
pub enum SvmModel {
    Linear {
        weights: Vec<f64>,
        bias: f64,
    },
    Rbf {
        gamma: f64,
        /// Training rows with non-zero dual coefficient.
        support: Vec<Vec<f64>>,
        /// `αᵢ · ỹᵢ` for each support row.
        coef: Vec<f64>,
    },
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// `1 / (d · Var(X))` over all entries; 1 when X is constant.
pub fn scale_gamma(x: ArrayView2<'_, f64>) -> f64 {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.ncols() as f64 * var)
    } else {
        1.0
    }
}

pub fn fit(
    x: ArrayView2<'_, f64>,
    y: &[u8],
    weights: &ClassWeights,
    c: f64,
    kernel: SvmKernel,
    seed: u64,
) -> Result<SvmModel> {
    if !(c > 0.0) {
        return Err(Error::Config(format!("C must be positive, got {c}")));
    }
    let n = x.nrows();
    let d = x.ncols();
    let signs: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let upper: Vec<f64> = y.iter().map(|&l| c * weights.of(l)).collect();
    let rows: Vec<Vec<f64>> = x.outer_iter().map(|r| r.to_vec()).collect();
    let mut alpha = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(seed);

    let gamma = scale_gamma(x);
    let gram: Option<Array2<f64>> = match kernel {
        SvmKernel::Linear => None,
        SvmKernel::Rbf => Some(Array2::from_shape_fn((n, n), |(i, j)| rbf(&rows[i], &rows[j], gamma) + 1.0)),
    };
    let diag: Vec<f64> = match &gram {
        None => rows.iter().map(|v| v.iter().map(|a| a * a).sum::<f64>() + 1.0).collect(),
        Some(g) => (0..n).map(|i| g[[i, i]]).collect(),
    };
    // Linear: w (d) + bias; kernel: f_i = Σ_j α_j ỹ_j K_ij.
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut f = vec![0.0; n];

    for _ in 0..MAX_EPOCHS {
        rng::shuffle(&mut r, &mut order);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let margin = match &gram {
                None => rows[i].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b,
                Some(_) => f[i],
            };
            let g = signs[i] * margin - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == upper[i] {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() <= 1e-12 || diag[i] <= 0.0 {
                continue;
            }
            let new_alpha = (alpha[i] - g / diag[i]).clamp(0.0, upper[i]);
            let delta = (new_alpha - alpha[i]) * signs[i];
            alpha[i] = new_alpha;
            if delta == 0.0 {
                continue;
            }
            match &gram {
                None => {
                    for (wj, xj) in w.iter_mut().zip(&rows[i]) {
                        *wj += delta * xj;
                    }
                    b += delta;
                }
                Some(gm) => {
                    for (fj, kij) in f.iter_mut().zip(gm.row(i)) {
                        *fj += delta * kij;
                    }
                }
            }
        }
        if pg_max - pg_min < DUAL_TOL {
            break;
        }
    }
    if w.iter().chain(&f).any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::Numeric {
            grid_point: String::new(),
            message: "SVM dual coordinate descent produced non-finite values".into(),
        });
    }
    Ok(match kernel {
        SvmKernel::Linear => SvmModel::Linear { weights: w, bias: b },
        SvmKernel::Rbf => {
            let (support, coef) = (0..n)
                .filter(|&i| alpha[i] > 0.0)
                .map(|i| (rows[i].clone(), alpha[i] * signs[i]))
                .unzip();
            SvmModel::Rbf { gamma, support, coef }
        }
    })
}

impl SvmModel {
    pub fn decision(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.outer_iter()
            .map(|row| match self {
                SvmModel::Linear { weights, bias } => {
                    row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() + bias
                }
                SvmModel::Rbf { gamma, support, coef } => {
                    let q = row.to_vec();
                    support
                        .iter()
                        .zip(coef)
                        .map(|(s, c)| c * (rbf(s, &q, *gamma) + 1.0))
                        .sum()
                }
            })
            .collect()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<u8> {
        self.decision(x).into_iter().map(|d| u8::from(d > 0.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{compute_class_weights, ClassWeightMode};
    use ndarray::array;

    #[test]
    fn separates_a_simple_set() {
        let x = array![[-2.0, 0.0], [-1.5, 0.3], [-1.0, -0.2], [1.0, 0.1], [1.6, -0.3], [2.0, 0.2]];
        let y = [0, 0, 0, 1, 1, 1];
        let w = compute_class_weights(&y, ClassWeightMode::None).unwrap();
        for kernel in [SvmKernel::Linear, SvmKernel::Rbf] {
            let m = fit(x.view(), &y, &w, 10.0, kernel, 1).unwrap();
            assert_eq!(m.predict(x.view()), y.to_vec(), "{kernel:?}");
        }
    }

    #[test]
    fn balance_weights_shift_boundary_toward_majority() {
        // overlapping 1-D classes, 3:1 imbalance
        let xs = [-1.0, -0.6, -0.2, 0.1, 0.3, 0.5, 0.7, 1.1, 0.2, 0.6, 0.9, 1.4];
        let y = [0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
        let x = Array2::from_shape_vec((12, 1), xs.to_vec()).unwrap();
        let none = compute_class_weights(&y, ClassWeightMode::None).unwrap();
        let bal = compute_class_weights(&y, ClassWeightMode::Balance).unwrap();
        let recall = |m: &SvmModel| {
            let p = m.predict(x.view());
            (8..12).filter(|&i| p[i] == 1).count()
        };
        let a = fit(x.view(), &y, &none, 1.0, SvmKernel::Linear, 0).unwrap();
        let b = fit(x.view(), &y, &bal, 1.0, SvmKernel::Linear, 0).unwrap();
        assert!(recall(&b) >= recall(&a));
    }
}
