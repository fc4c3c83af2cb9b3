use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Per-column centering and scaling fitted on training rows.
/// Constant columns are centered but not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Standardizer {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            std.push(var.sqrt());
        }
        Standardizer { mean, std }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            let scale = if s > 0.0 { 1.0 / s } else { 1.0 };
            col.mapv_inplace(|v| (v - m) * scale);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn training_columns_are_standardized(
            rows in 2usize..40,
            data in proptest::collection::vec(-1e3f64..1e3, 40 * 4),
        ) {
            let mut x = Array2::from_shape_vec((40, 4), data).unwrap();
            x.column_mut(2).fill(7.5);
            let x = x.slice(ndarray::s![..rows, ..]).to_owned();
            let s = Standardizer::fit(x.view());
            let t = s.transform(x.view());
            for j in 0..4 {
                let col = t.column(j);
                let m = col.sum() / rows as f64;
                let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / rows as f64).sqrt();
                prop_assert!(m.abs() < 1e-9);
                if s.std[j] > 1e-6 {
                    prop_assert!((sd - 1.0).abs() < 1e-9);
                } else if j == 2 {
                    prop_assert!(col.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn test_rows_use_training_statistics() {
        let train = ndarray::array![[0.0, 1.0], [2.0, 1.0]];
        let s = Standardizer::fit(train.view());
        let t = s.transform(ndarray::array![[4.0, 3.0]].view());
        assert_eq!(t[[0, 0]], 3.0);
        assert_eq!(t[[0, 1]], 2.0);
    }
}
