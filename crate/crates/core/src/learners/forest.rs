//! Bagged CART classifiers with Gini impurity and per-split feature sampling.
//!
//! Tree `t` draws from its own stream `derive_seed(seed, [t])`, so the first
//! `m` trees of a forest do not depend on how many trees were requested.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClassWeights;
use crate::rng::{self, StreamRng};
use ndarray::ArrayView2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl ForestParams {
    /// Nodes with fewer rows than this are never split.
    pub fn effective_split(&self) -> usize {
        self.min_samples_split.max(2 * self.min_samples_leaf).max(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Weighted share of the stress class among the rows reaching the leaf.
        p1: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_p1(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { p1 } => return p1,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

struct Builder<'a> {
    columns: Vec<Vec<f64>>,
    y: &'a [u8],
    /// bootstrap count × class weight
    weight: Vec<f64>,
    mtry: usize,
    split_at: usize,
    leaf: usize,
    rng: StreamRng,
    nodes: Vec<Node>,
}

fn gini(w0: f64, w1: f64) -> f64 {
    let t = w0 + w1;
    if t <= 0.0 {
        return 0.0;
    }
    let (p0, p1) = (w0 / t, w1 / t);
    1.0 - p0 * p0 - p1 * p1
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn class_totals(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(a, b), &i| {
            if self.y[i] == 1 {
                (a, b + self.weight[i])
            } else {
                (a + self.weight[i], b)
            }
        })
    }

    fn best_split(&mut self, rows: &[usize], w0: f64, w1: f64) -> Option<BestSplit> {
        let d = self.columns.len();
        let parent = (w0 + w1) * gini(w0, w1);
        let mut order: Vec<usize> = (0..d).collect();
        let mut best: Option<BestSplit> = None;
        let mut visited = 0;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        // partial Fisher-Yates: draw features until `mtry` non-constant ones were examined
        for k in 0..d {
            if visited == self.mtry {
                break;
            }
            let j = self.rng.gen_range(k..d);
            order.swap(k, j);
            let f = order[k];
            let col = &self.columns[f];
            let first = col[rows[0]];
            if rows.iter().all(|&i| col[i] == first) {
                continue;
            }
            visited += 1;
            sorted.clear();
            sorted.extend(rows.iter().map(|&i| (col[i], i)));
            sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (mut l0, mut l1) = (0.0, 0.0);
            for pos in 0..sorted.len() - 1 {
                let (lo, i) = sorted[pos];
                if self.y[i] == 1 {
                    l1 += self.weight[i];
                } else {
                    l0 += self.weight[i];
                }
                let hi = sorted[pos + 1].0;
                let n_left = pos + 1;
                if lo == hi || n_left < self.leaf || sorted.len() - n_left < self.leaf {
                    continue;
                }
                let (r0, r1) = (w0 - l0, w1 - l1);
                let child = (l0 + l1) * gini(l0, l1) + (r0 + r1) * gini(r0, r1);
                let gain = parent - child;
                if gain > 1e-12 && best.as_ref().map_or(true, |b| gain > b.gain) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: &mut [usize]) -> usize {
        let id = self.nodes.len();
        let (w0, w1) = self.class_totals(rows);
        self.nodes.push(Node::Leaf { p1: w1 / (w0 + w1) });
        if rows.len() < self.split_at || w0 == 0.0 || w1 == 0.0 {
            return id;
        }
        let Some(split) = self.best_split(rows, w0, w1) else {
            return id;
        };
        let col = &self.columns[split.feature];
        let mut cut = 0;
        for k in 0..rows.len() {
            if col[rows[k]] <= split.threshold {
                rows.swap(cut, k);
                cut += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(cut);
        let left = self.grow(left_rows);
        let right = self.grow(right_rows);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

fn fit_tree(x: ArrayView2<'_, f64>, y: &[u8], weights: &ClassWeights, params: &ForestParams, seed: u64) -> Tree {
    let n = x.nrows();
    let d = x.ncols();
    let mut r = rng::stream(seed);
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[r.gen_range(0..n)] += 1;
    }
    let weight: Vec<f64> = counts.iter().zip(y).map(|(&c, &l)| c as f64 * weights.of(l)).collect();
    let mut rows: Vec<usize> = (0..n).filter(|&i| counts[i] > 0).collect();
    let mut b = Builder {
        columns: (0..d).map(|j| x.column(j).to_vec()).collect(),
        y,
        weight,
        mtry: ((d as f64).sqrt().floor() as usize).max(1),
        split_at: params.effective_split(),
        leaf: params.min_samples_leaf.max(1),
        rng: r,
        nodes: Vec::new(),
    };
    b.grow(&mut rows);
    Tree { nodes: b.nodes }
}

pub fn fit(x: ArrayView2<'_, f64>, y: &[u8], weights: &ClassWeights, params: &ForestParams, seed: u64) -> Forest {
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| fit_tree(x, y, weights, params, rng::derive_seed(seed, &[t as u64])))
        .collect();
    Forest {
        n_features: x.ncols(),
        trees,
    }
}

impl Forest {
    /// Mean leaf probability over the first `n_trees` trees.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>, n_trees: usize) -> Vec<f64> {
        let used = &self.trees[..n_trees.min(self.trees.len())];
        x.outer_iter()
            .map(|row| {
                let row = row.to_vec();
                used.iter().map(|t| t.leaf_p1(&row)).sum::<f64>() / used.len() as f64
            })
            .collect()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>, n_trees: usize) -> Vec<u8> {
        self.predict_proba(x, n_trees).into_iter().map(|p| u8::from(p > 0.5)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{compute_class_weights, ClassWeightMode};
    use ndarray::Array2;

    fn blobs(seed: u64, n: usize) -> (Array2<f64>, Vec<u8>) {
        let mut r = rng::stream(seed);
        let mut x = Array2::zeros((n, 4));
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        for i in 0..n {
            for j in 0..4 {
                x[[i, j]] = rng::standard_normal(&mut r) + 3.0 * y[i] as f64;
            }
        }
        (x, y)
    }

    #[test]
    fn prefix_of_larger_forest_matches_smaller_forest() {
        let (x, y) = blobs(1, 40);
        let w = compute_class_weights(&y, ClassWeightMode::None).unwrap();
        let p = |n| ForestParams {
            n_estimators: n,
            min_samples_split: 2,
            min_samples_leaf: 1,
        };
        let small = fit(x.view(), &y, &w, &p(5), 9);
        let big = fit(x.view(), &y, &w, &p(12), 9);
        assert_eq!(small.trees[..], big.trees[..5]);
    }

    #[test]
    fn leaves_respect_minimum_size() {
        let (x, y) = blobs(2, 60);
        let mut rows: Vec<usize> = (0..60).collect();
        let mut b = Builder {
            columns: (0..4).map(|j| x.column(j).to_vec()).collect(),
            y: &y,
            weight: vec![1.0; 60],
            mtry: 2,
            split_at: 8,
            leaf: 4,
            rng: rng::stream(5),
            nodes: Vec::new(),
        };
        b.grow(&mut rows);
        let tree = Tree { nodes: b.nodes };
        let mut per_leaf = std::collections::HashMap::new();
        for row in x.outer_iter() {
            let row = row.to_vec();
            let mut at = 0;
            while let Node::Split { feature, threshold, left, right } = tree.nodes[at] {
                at = if row[feature] <= threshold { left } else { right };
            }
            *per_leaf.entry(at).or_insert(0) += 1;
        }
        assert!(per_leaf.values().all(|&c| c >= 4), "{per_leaf:?}");
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let (x, y) = blobs(4, 50);
        let w = compute_class_weights(&y, ClassWeightMode::None).unwrap();
        let params = ForestParams {
            n_estimators: 50,
            min_samples_split: 2,
            min_samples_leaf: 1,
        };
        let forest = fit(x.view(), &y, &w, &params, 0);
        assert_eq!(forest.predict(x.view(), 50), y);
    }
}
