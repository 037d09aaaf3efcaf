use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, ForestParams};
use crate::stats::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    /// Rows with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub value: f64,
    pub n_samples: usize,
    pub split: Option<Split>,
    /// Squared-error reduction of this split divided by the root sample
    /// count, i.e. variance reduction weighted by the node's sample share.
    pub impurity_decrease: f64,
}

/// Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
    pub n_features: usize,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        while let Some(s) = self.nodes[i].split {
            i = if x[s.feature] <= s.threshold { s.left } else { s.right };
        }
        self.nodes[i].value
    }

    /// Same as `predict` for row `q` of column-major features.
    pub(crate) fn predict_col(&self, x: &[Vec<f64>], q: usize) -> f64 {
        let mut i = 0;
        while let Some(s) = self.nodes[i].split {
            i = if x[s.feature][q] <= s.threshold {
                s.left
            } else {
                s.right
            };
        }
        self.nodes[i].value
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            best = best.max(d);
            if let Some(s) = self.nodes[i].split {
                stack.push((s.left, d + 1));
                stack.push((s.right, d + 1));
            }
        }
        best
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    /// Total weighted impurity decrease per feature.
    pub fn feature_decrease(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for n in &self.nodes {
            if let Some(s) = n.split {
                out[s.feature] += n.impurity_decrease;
            }
        }
        out
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best squared-error split of `rows` on `feature`, or `None` when no cut
/// leaves `min_leaf` rows on both sides.
fn best_cut(
    data: &Dataset,
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
    scratch: &mut Vec<(f64, f64)>,
) -> Option<Candidate> {
    let col = &data.x[feature];
    scratch.clear();
    scratch.extend(rows.iter().map(|&q| (col[q], data.y[q])));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = scratch.len();
    let total: f64 = scratch.iter().map(|p| p.1).sum();
    let base = total * total / n as f64;
    let mut left = 0.0;
    let mut best: Option<Candidate> = None;
    for i in 0..n - 1 {
        left += scratch[i].1;
        let nl = i + 1;
        if nl < min_leaf {
            continue;
        }
        if n - nl < min_leaf {
            break;
        }
        let (a, b) = (scratch[i].0, scratch[i + 1].0);
        if a == b {
            continue;
        }
        let right = total - left;
        let gain = left * left / nl as f64 + right * right / (n - nl) as f64 - base;
        // Strict improvement keeps the lowest threshold on ties.
        if best.as_ref().is_none_or(|c| gain > c.gain) {
            let mut threshold = 0.5 * (a + b);
            if threshold >= b {
                threshold = a;
            }
            best = Some(Candidate {
                feature,
                threshold,
                gain,
            });
        }
    }
    best
}

/// Grows one CART regression tree on `rows` (repeats allowed, as from a
/// bootstrap draw). Each node draws its feature subset from a seed derived
/// from its path, so a deeper cap only refines a shallower tree.
pub fn fit_tree(data: &Dataset, rows: &[usize], params: &ForestParams, seed: u64) -> RegressionTree {
    let n_features = data.n_features();
    let m = params.max_features.resolve(n_features);
    let n_root = rows.len() as f64;
    let min_leaf = params.min_samples_leaf.max(1);
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut scratch = Vec::with_capacity(rows.len());

    let mean = |r: &[usize]| r.iter().map(|&q| data.y[q]).sum::<f64>() / r.len() as f64;
    nodes.push(TreeNode {
        value: mean(rows),
        n_samples: rows.len(),
        split: None,
        impurity_decrease: 0.0,
    });
    let mut stack: Vec<(usize, Vec<usize>, usize, u64)> = vec![(0, rows.to_vec(), 0, seed)];

    while let Some((id, idx, depth, node_seed)) = stack.pop() {
        let n = idx.len();
        if params.max_depth.is_some_and(|d| depth >= d) || n < params.min_samples_split.max(2) || n < 2 * min_leaf {
            continue;
        }
        let y0 = data.y[idx[0]];
        if idx.iter().all(|&q| data.y[q] == y0) {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(node_seed);
        let mut feats = rand::seq::index::sample(&mut rng, n_features, m).into_vec();
        feats.sort_unstable();
        let mut best: Option<Candidate> = None;
        for &f in &feats {
            if let Some(c) = best_cut(data, &idx, f, min_leaf, &mut scratch) {
                if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best.filter(|c| c.gain > 0.0) else {
            continue;
        };
        let col = &data.x[best.feature];
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&q| col[q] <= best.threshold);
        let (left, right) = (nodes.len(), nodes.len() + 1);
        nodes.push(TreeNode {
            value: mean(&l),
            n_samples: l.len(),
            split: None,
            impurity_decrease: 0.0,
        });
        nodes.push(TreeNode {
            value: mean(&r),
            n_samples: r.len(),
            split: None,
            impurity_decrease: 0.0,
        });
        nodes[id].split = Some(Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        });
        nodes[id].impurity_decrease = best.gain / n_root;
        stack.push((right, r, depth + 1, mix_seed(node_seed, 2)));
        stack.push((left, l, depth + 1, mix_seed(node_seed, 1)));
    }
    RegressionTree { nodes, n_features }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{mse, testdata, MaxFeatures};

    fn params(depth: Option<usize>) -> ForestParams {
        ForestParams {
            n_trees: 1,
            max_depth: depth,
            min_samples_leaf: 1,
            min_samples_split: 2,
            max_features: MaxFeatures::All,
            bootstrap: false,
        }
    }

    fn step_data() -> Dataset {
        let q = 60;
        let x1: Vec<f64> = (0..q).map(|i| i as f64).collect();
        let x2: Vec<f64> = (0..q).map(|i| ((i * 7) % 13) as f64).collect();
        let y = x1.iter().map(|&v| if v < 30.0 { 1.0 } else { 5.0 }).collect();
        Dataset::new(vec![x1, x2], y, vec!["a".into(), "b".into()], testdata::dates(q)).unwrap()
    }

    #[test]
    fn recovers_a_step_function() {
        let d = step_data();
        let rows: Vec<usize> = (0..d.len()).collect();
        let t = fit_tree(&d, &rows, &params(None), 0);
        assert_eq!(t.nodes.len(), 3);
        let s = t.nodes[0].split.unwrap();
        assert_eq!((s.feature, s.threshold), (0, 29.5));
        assert_eq!(t.predict(&[10.0, 0.0]), 1.0);
        assert_eq!(t.predict(&[40.0, 0.0]), 5.0);
        // Variance of the two-point target is 4; the split removes all of it.
        assert!((t.nodes[0].impurity_decrease - 4.0).abs() < 1e-12);
    }

    #[test]
    fn constant_target_is_a_single_leaf() {
        let mut d = step_data();
        d.y = vec![2.5; d.len()];
        let rows: Vec<usize> = (0..d.len()).collect();
        let t = fit_tree(&d, &rows, &params(None), 0);
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&[0.0, 0.0]), 2.5);
    }

    #[test]
    fn zero_depth_is_the_global_mean() {
        let d = testdata::linear(100, 2);
        let rows: Vec<usize> = (0..d.len()).collect();
        let t = fit_tree(&d, &rows, &params(Some(0)), 0);
        assert_eq!(t.nodes.len(), 1);
        assert!((t.nodes[0].value - d.y.iter().sum::<f64>() / 100.0).abs() < 1e-12);
    }

    #[test]
    fn limits_are_respected() {
        let d = testdata::linear(300, 3);
        let rows: Vec<usize> = (0..d.len()).collect();
        let t = fit_tree(&d, &rows, &params(Some(3)), 1);
        assert!(t.depth() <= 3 && t.n_leaves() <= 8);
        let mut p = params(None);
        p.min_samples_leaf = 20;
        let t = fit_tree(&d, &rows, &p, 1);
        assert!(t.nodes.iter().all(|n| n.n_samples >= 20));
        let mut p = params(None);
        p.min_samples_split = 50;
        let t = fit_tree(&d, &rows, &p, 1);
        assert!(t.nodes.iter().all(|n| n.split.is_none() || n.n_samples >= 50));
    }

    #[test]
    fn duplicated_feature_breaks_ties_to_lower_index() {
        let d0 = step_data();
        let mut d = d0.clone();
        d.x = vec![d0.x[0].clone(), d0.x[0].clone()];
        let rows: Vec<usize> = (0..d.len()).collect();
        let t = fit_tree(&d, &rows, &params(None), 0);
        let used: Vec<usize> = t.nodes.iter().filter_map(|n| n.split.map(|s| s.feature)).collect();
        assert!(used.iter().all(|&f| f == 0));
    }

    #[test]
    fn training_error_is_monotone_in_depth() {
        let d = testdata::linear(400, 5);
        let rows: Vec<usize> = (0..d.len()).collect();
        let mut p = params(None);
        p.max_features = MaxFeatures::Third;
        let mut last = f64::INFINITY;
        for depth in 0..14 {
            p.max_depth = Some(depth);
            let t = fit_tree(&d, &rows, &p, 42);
            let yhat: Vec<f64> = rows.iter().map(|&q| t.predict_col(&d.x, q)).collect();
            let e = mse(&d.y, &yhat);
            assert!(e <= last + 1e-12, "depth {depth}: {e} > {last}");
            last = e;
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn leaf_values_are_means_and_decrease_is_nonnegative(seed in 0u64..1000, depth in 1usize..8) {
            let d = testdata::linear(120, seed);
            let rows: Vec<usize> = (0..d.len()).collect();
            let t = fit_tree(&d, &rows, &params(Some(depth)), seed);
            let lo = d.y.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = d.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for n in &t.nodes {
                proptest::prop_assert!(n.impurity_decrease >= 0.0);
                proptest::prop_assert!(n.value >= lo - 1e-12 && n.value <= hi + 1e-12);
                if let Some(s) = n.split {
                    proptest::prop_assert_eq!(t.nodes[s.left].n_samples + t.nodes[s.right].n_samples, n.n_samples);
                }
            }
            // Decreases telescope to the root SSE minus the leaf SSE, per root row.
            let yhat: Vec<f64> = rows.iter().map(|&q| t.predict_col(&d.x, q)).collect();
            let ybar = d.y.iter().sum::<f64>() / d.len() as f64;
            let root: f64 = d.y.iter().map(|v| (v - ybar).powi(2)).sum::<f64>() / d.len() as f64;
            let total: f64 = t.feature_decrease().iter().sum();
            proptest::prop_assert!((root - mse(&d.y, &yhat) - total).abs() < 1e-9);
        }
    }
}
