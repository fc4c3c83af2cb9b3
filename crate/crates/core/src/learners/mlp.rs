//! One-hidden-layer perceptron: ReLU hidden units, logistic output, weighted
//! binary cross-entropy, Adam on shuffled mini-batches for a fixed budget.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use super::ClassWeights;
use crate::error::{Error, Result};
use crate::rng;

pub const BATCH_SIZE: usize = 32;
pub const EPOCHS: usize = 300;
pub const LEARNING_RATE: f64 = 1e-3;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub n_inputs: usize,
    pub hidden: usize,
    /// Input-to-hidden weights, row-major `n_inputs × hidden`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Per-batch scratch buffers. Parameters and `grad` use the flat layout
/// `[w1 (d × h, row-major), b1, w2, b2]`.
struct Workspace {
    d: usize,
    h: usize,
    xb: Array2<f64>,
    z1: Array2<f64>,
    z2: Vec<f64>,
    grad: Vec<f64>,
}

impl Workspace {
    fn new(d: usize, h: usize) -> Self {
        Workspace {
            d,
            h,
            xb: Array2::zeros((0, d)),
            z1: Array2::zeros((0, h)),
            z2: Vec::new(),
            grad: vec![0.0; d * h + 2 * h + 1],
        }
    }

    /// Gathers the listed rows of `x` into `xb`, hidden pre-activations into
    /// `z1` and output logits into `z2`.
    fn forward(&mut self, params: &[f64], x: ArrayView2<'_, f64>, rows: &[usize]) {
        let (d, h) = (self.d, self.h);
        let n = rows.len();
        if self.xb.nrows() != n {
            self.xb = Array2::zeros((n, d));
            self.z1 = Array2::zeros((n, h));
        }
        for (b, &i) in rows.iter().enumerate() {
            self.xb.row_mut(b).assign(&x.row(i));
        }
        let w1 = ArrayView2::from_shape((d, h), &params[..d * h]).expect("flat layout");
        let b1 = ArrayView1::from(&params[d * h..d * h + h]);
        let w2 = &params[d * h + h..d * h + 2 * h];
        let b2 = params[d * h + 2 * h];
        for mut row in self.z1.rows_mut() {
            row.assign(&b1);
        }
        general_mat_mul(1.0, &self.xb, &w1, 1.0, &mut self.z1);
        self.z2.clear();
        for row in self.z1.rows() {
            let z = row.as_slice().expect("standard layout");
            self.z2.push(z.iter().zip(w2).fold(b2, |acc, (&zk, &wk)| acc + zk.max(0.0) * wk));
        }
    }

    /// Loss `Σ sᵢ·bceᵢ / n` over `rows`; the gradient lands in `grad`.
    fn loss_and_grad(&mut self, params: &[f64], x: ArrayView2<'_, f64>, y: &[f64], sw: &[f64], rows: &[usize]) -> f64 {
        let (d, h) = (self.d, self.h);
        let n = rows.len() as f64;
        self.forward(params, x, rows);
        let w2 = &params[d * h + h..d * h + 2 * h];
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let (gw1, rest) = self.grad.split_at_mut(d * h);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(h);
        let mut loss = 0.0;
        // z1 is overwritten in place with the hidden-layer error
        for (b, &i) in rows.iter().enumerate() {
            let zo = self.z2[b];
            loss += sw[i] * (softplus(zo) - y[i] * zo);
            let g = sw[i] * (sigmoid(zo) - y[i]) / n;
            gb2[0] += g;
            let mut row = self.z1.row_mut(b);
            let z = row.as_slice_mut().expect("standard layout");
            for k in 0..h {
                if z[k] > 0.0 {
                    gw2[k] += z[k] * g;
                    z[k] = g * w2[k];
                } else {
                    z[k] = 0.0;
                }
                gb1[k] += z[k];
            }
        }
        let mut gw1 = ArrayViewMut2::from_shape((d, h), gw1).expect("flat layout");
        general_mat_mul(1.0, &self.xb.t(), &self.z1, 0.0, &mut gw1);
        loss / n
    }
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

/// Glorot-uniform initial parameters in flat layout `[w1, b1, w2, b2]`.
pub fn initial_params(d: usize, h: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed);
    let l1 = (6.0 / (d + h) as f64).sqrt();
    let l2 = (6.0 / (h + 1) as f64).sqrt();
    let mut v = Vec::with_capacity(d * h + 2 * h + 1);
    for _ in 0..d * h + h {
        v.push(rng::uniform_in(&mut r, -l1, l1));
    }
    for _ in 0..h + 1 {
        v.push(rng::uniform_in(&mut r, -l2, l2));
    }
    v
}

/// Mean weighted cross-entropy and its gradient at flat parameters.
pub fn loss_and_grad(
    params: &[f64],
    hidden: usize,
    x: ArrayView2<'_, f64>,
    y: &[u8],
    sample_weight: &[f64],
) -> (f64, Vec<f64>) {
    let mut ws = Workspace::new(x.ncols(), hidden);
    let yf: Vec<f64> = y.iter().map(|&l| l as f64).collect();
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let loss = ws.loss_and_grad(params, x, &yf, sample_weight, &rows);
    (loss, ws.grad)
}

pub fn fit(x: ArrayView2<'_, f64>, y: &[u8], weights: &ClassWeights, hidden: usize, seed: u64) -> Result<MlpModel> {
    if hidden == 0 {
        return Err(Error::Config("hidden layer width must be positive".into()));
    }
    let n = x.nrows();
    let d = x.ncols();
    let mut params = initial_params(d, hidden, rng::derive_seed(seed, &[0]));
    let mut order_rng = rng::stream(rng::derive_seed(seed, &[1]));
    let yf: Vec<f64> = y.iter().map(|&l| l as f64).collect();
    let sw = weights.per_sample(y);
    let mut ws = Workspace::new(d, hidden);
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0i32;
    for epoch in 0..EPOCHS {
        rng::shuffle(&mut order_rng, &mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(BATCH_SIZE) {
            let loss = ws.loss_and_grad(&params, x, &yf, &sw, batch);
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    grid_point: String::new(),
                    message: format!("MLP loss became non-finite in epoch {epoch}"),
                });
            }
            epoch_loss += loss * batch.len() as f64;
            step += 1;
            let c1 = 1.0 - BETA1.powi(step);
            let c2 = 1.0 - BETA2.powi(step);
            for (((p, mk), vk), &g) in params.iter_mut().zip(&mut m).zip(&mut v).zip(&ws.grad) {
                *mk = BETA1 * *mk + (1.0 - BETA1) * g;
                *vk = BETA2 * *vk + (1.0 - BETA2) * g * g;
                *p -= LEARNING_RATE * (*mk / c1) / ((*vk / c2).sqrt() + ADAM_EPS);
            }
        }
        log::trace!("mlp epoch {epoch}: loss {}", epoch_loss / n as f64);
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric {
            grid_point: String::new(),
            message: "MLP parameters became non-finite".into(),
        });
    }
    let h = hidden;
    Ok(MlpModel {
        n_inputs: d,
        hidden,
        w1: params[..d * h].to_vec(),
        b1: params[d * h..d * h + h].to_vec(),
        w2: params[d * h + h..d * h + 2 * h].to_vec(),
        b2: params[d * h + 2 * h],
    })
}

impl MlpModel {
    fn logits(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut params = self.w1.clone();
        params.extend(&self.b1);
        params.extend(&self.w2);
        params.push(self.b2);
        let mut ws = Workspace::new(self.n_inputs, self.hidden);
        let rows: Vec<usize> = (0..x.nrows()).collect();
        ws.forward(&params, x, &rows);
        ws.z2
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        self.logits(x).into_iter().map(sigmoid).collect()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<u8> {
        self.logits(x).into_iter().map(|z| u8::from(z > 0.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{compute_class_weights, ClassWeightMode};

    #[test]
    fn gradient_matches_finite_differences_at_init() {
        let mut r = rng::stream(11);
        let (n, d, h) = (12, 4, 6);
        let x = Array2::from_shape_fn((n, d), |_| rng::standard_normal(&mut r));
        let y: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let sw = compute_class_weights(&y, ClassWeightMode::Balance).unwrap().per_sample(&y);
        let p = initial_params(d, h, 5);
        let (_, g) = loss_and_grad(&p, h, x.view(), &y, &sw);
        let eps = 1e-6;
        let mut num = vec![0.0; p.len()];
        for k in 0..p.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[k] += eps;
            b[k] -= eps;
            num[k] = (loss_and_grad(&a, h, x.view(), &y, &sw).0 - loss_and_grad(&b, h, x.view(), &y, &sw).0) / (2.0 * eps);
        }
        let diff: f64 = g.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = num.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / scale < 1e-4, "{}", diff / scale);
    }

    #[test]
    fn loss_matches_direct_formula() {
        let x = Array2::from_shape_vec((2, 1), vec![1.0, -2.0]).unwrap();
        // w1 = [1], b1 = [0], w2 = [2], b2 = -1: logits 1 and -1
        let p = [1.0, 0.0, 2.0, -1.0];
        let (loss, _) = loss_and_grad(&p, 1, x.view(), &[1, 0], &[1.0, 1.0]);
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-15);
    }

    #[test]
    fn learns_a_separable_set() {
        let mut r = rng::stream(2);
        let n = 60;
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let x = Array2::from_shape_fn((n, 2), |(i, _)| rng::standard_normal(&mut r) * 0.5 + 3.0 * y[i] as f64 - 1.5);
        let w = compute_class_weights(&y, ClassWeightMode::None).unwrap();
        let m = fit(x.view(), &y, &w, 16, 0).unwrap();
        assert_eq!(m.predict(x.view()), y);
        let again = fit(x.view(), &y, &w, 16, 0).unwrap();
        assert_eq!(m, again);
    }
}
