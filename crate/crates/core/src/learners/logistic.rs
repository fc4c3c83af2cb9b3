//! L2-regularized, class-weighted logistic regression.
//!
//! Objective (intercept unpenalized):
//! `0.5·‖w‖² + C · Σ sᵢ · log(1 + exp(−ỹᵢ (w·xᵢ + b)))` with ỹ ∈ {−1, +1},
//! minimized by damped Newton steps with backtracking.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::ClassWeights;
use crate::error::{Error, Result};

pub const MAX_ITER: usize = 5000;
pub const GRAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Loss and gradient at `params = [w..., b]`.
pub fn loss_and_grad(
    params: &[f64],
    x: ArrayView2<'_, f64>,
    y: &[u8],
    sample_weight: &[f64],
    c: f64,
) -> (f64, Vec<f64>) {
    let d = x.ncols();
    let (w, b) = params.split_at(d);
    let b = b[0];
    let mut loss = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let mut grad: Vec<f64> = w.to_vec();
    grad.push(0.0);
    for (i, row) in x.outer_iter().enumerate() {
        let sign = if y[i] == 1 { 1.0 } else { -1.0 };
        let z = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
        let m = sign * z;
        loss += c * sample_weight[i] * softplus(-m);
        // d/dz softplus(-ỹ z) = -ỹ σ(-ỹ z)
        let g = -c * sample_weight[i] * sign * sigmoid(-m);
        for (gj, xj) in grad.iter_mut().zip(row.iter()) {
            *gj += g * xj;
        }
        grad[d] += g;
    }
    (loss, grad)
}

fn hessian(params: &[f64], x: ArrayView2<'_, f64>, sample_weight: &[f64], c: f64) -> Vec<f64> {
    let d = x.ncols();
    let p = d + 1;
    let mut h = vec![0.0; p * p];
    for j in 0..d {
        h[j * p + j] = 1.0;
    }
    let (w, b) = params.split_at(d);
    let mut aug = vec![1.0; p];
    for (i, row) in x.outer_iter().enumerate() {
        let z = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b[0];
        let s = sigmoid(z);
        let k = c * sample_weight[i] * s * (1.0 - s);
        if k == 0.0 {
            continue;
        }
        aug[..d].iter_mut().zip(row.iter()).for_each(|(a, v)| *a = *v);
        for r in 0..p {
            let kr = k * aug[r];
            for col in 0..=r {
                h[r * p + col] += kr * aug[col];
            }
        }
    }
    for r in 0..p {
        for col in 0..r {
            h[col * p + r] = h[r * p + col];
        }
    }
    h
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major `n × n`).
pub(crate) fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * z[k]).sum();
        z[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (z[i] - s) / l[i * n + i];
    }
    Some(x)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn fit(x: ArrayView2<'_, f64>, y: &[u8], weights: &ClassWeights, c: f64) -> Result<LogisticModel> {
    if !(c > 0.0) {
        return Err(Error::Config(format!("C must be positive, got {c}")));
    }
    let sw = weights.per_sample(y);
    let d = x.ncols();
    let p = d + 1;
    let mut params = vec![0.0; p];
    let (mut loss, mut grad) = loss_and_grad(&params, x, y, &sw, c);
    let mut iterations = 0;
    while iterations < MAX_ITER && norm(&grad) >= GRAD_TOL {
        if !loss.is_finite() {
            break;
        }
        iterations += 1;
        let mut h = hessian(&params, x, &sw, c);
        // tiny ridge keeps the intercept direction positive definite
        for r in 0..p {
            h[r * p + r] += 1e-10;
        }
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let step = cholesky_solve(&h, &neg, p).unwrap_or(neg);
        let slope: f64 = step.iter().zip(&grad).map(|(s, g)| s * g).sum();
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let trial: Vec<f64> = params.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let (tl, tg) = loss_and_grad(&trial, x, y, &sw, c);
            if tl.is_finite() && tl <= loss + 1e-4 * t * slope {
                accepted = Some((trial, tl, tg));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((np, nl, ng)) => {
                let stalled = nl >= loss && norm(&ng) >= norm(&grad);
                params = np;
                loss = nl;
                grad = ng;
                if stalled {
                    break;
                }
            }
            // no descent possible at working precision
            None => break,
        }
    }
    if !loss.is_finite() || params.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            grid_point: String::new(),
            message: format!("logistic loss diverged after {iterations} iterations"),
        });
    }
    let intercept = params.pop().unwrap_or(0.0);
    Ok(LogisticModel {
        weights: params,
        intercept,
        iterations,
        gradient_norm: norm(&grad),
    })
}

impl LogisticModel {
    pub fn decision(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.outer_iter()
            .map(|row| row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.intercept)
            .collect()
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        self.decision(x).into_iter().map(sigmoid).collect()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<u8> {
        self.decision(x).into_iter().map(|z| u8::from(z > 0.0)).collect()
    }
}
