//! k-nearest-neighbour vote over Euclidean distance.
//!
//! Distance ties are broken by training-row index. Uniform votes that tie go
//! to the non-stress class. With distance weights an exact match outvotes
//! everything else: only the zero-distance neighbours vote.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::KnnWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub weights: KnnWeights,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl KnnModel {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[u8], k: usize, weights: KnnWeights) -> KnnModel {
        KnnModel {
            k: k.max(1),
            weights,
            rows: x.outer_iter().map(|r| r.to_vec()).collect(),
            labels: y.to_vec(),
        }
    }

    /// `(class-0 vote, class-1 vote)` for one query row.
    fn votes(&self, q: &[f64]) -> (f64, f64) {
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(), i))
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        let near = &mut dist[..k];
        near.sort_by(cmp);
        let exact = near.iter().any(|&(d, _)| d == 0.0);
        near.iter().fold((0.0, 0.0), |(v0, v1), &(d, i)| {
            let w = match self.weights {
                KnnWeights::Uniform => 1.0,
                KnnWeights::Distance if exact => f64::from(u8::from(d == 0.0)),
                KnnWeights::Distance => 1.0 / d,
            };
            if self.labels[i] == 1 {
                (v0, v1 + w)
            } else {
                (v0 + w, v1)
            }
        })
    }

    /// Share of the vote held by the stress class.
    pub fn predict_score(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.outer_iter()
            .map(|r| {
                let (v0, v1) = self.votes(&r.to_vec());
                v1 / (v0 + v1)
            })
            .collect()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<u8> {
        x.outer_iter()
            .map(|r| {
                let (v0, v1) = self.votes(&r.to_vec());
                u8::from(v1 > v0)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn training_points_recover_their_labels() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let y = [1, 0, 0];
        let m = KnnModel::fit(x.view(), &y, 3, KnnWeights::Distance);
        assert_eq!(m.predict(x.view()), vec![1, 0, 0]);
    }

    #[test]
    fn uniform_tie_goes_to_class_zero() {
        let x = array![[0.0], [2.0]];
        let m = KnnModel::fit(x.view(), &[1, 0], 2, KnnWeights::Uniform);
        assert_eq!(m.predict(array![[1.0]].view()), vec![0]);
        assert_eq!(m.predict_score(array![[1.0]].view()), vec![0.5]);
    }

    #[test]
    fn distance_weights_favor_closer_rows() {
        let x = array![[0.0], [3.0], [3.5]];
        let m = KnnModel::fit(x.view(), &[1, 0, 0], 3, KnnWeights::Distance);
        // 1/0.5 = 2 for the stress row against 1/2.5 + 1/3 for the rest
        assert_eq!(m.predict(array![[0.5]].view()), vec![1]);
        let u = KnnModel::fit(x.view(), &[1, 0, 0], 3, KnnWeights::Uniform);
        assert_eq!(u.predict(array![[0.5]].view()), vec![0]);
    }

    #[test]
    fn equidistant_neighbours_break_by_index() {
        let x = array![[-1.0], [1.0], [1.0]];
        let m = KnnModel::fit(x.view(), &[1, 0, 0], 1, KnnWeights::Uniform);
        assert_eq!(m.predict(array![[0.0]].view()), vec![1]);
    }
}
