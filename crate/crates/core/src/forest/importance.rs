use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, fit_forest, mse, ts_cross_validate, CvResult, Dataset, EvalMetrics, ForestModel, ForestParams};
use crate::stats::mix_seed;
use crate::{Error, Result};

/// Mean decrease in impurity over trees, normalized to sum 1. All zeros when
/// no tree ever split (constant target).
pub fn gini_importance(m: &ForestModel) -> Vec<f64> {
    let mut total = vec![0.0; m.n_features()];
    for t in &m.trees {
        for (acc, v) in total.iter_mut().zip(t.feature_decrease()) {
            *acc += v;
        }
    }
    let s: f64 = total.iter().sum();
    if s > 0.0 {
        total.iter_mut().for_each(|v| *v /= s);
    }
    total
}

/// Mean and sample std of the MSE increase when one column of `data` is
/// shuffled. Repeat `r` of feature `f` shuffles with `mix_seed(mix_seed(seed, f), r)`.
pub fn permutation_importance(m: &ForestModel, data: &Dataset, repeats: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    if data.n_features() != m.n_features() {
        return Err(Error::Prediction {
            expected: m.n_features(),
            got: data.n_features(),
        });
    }
    if repeats == 0 || data.len() < 2 {
        return Err(Error::Metric("permutation needs repeats and at least two rows".into()));
    }
    let baseline = mse(&data.y, &m.predict_dataset(data)?);
    (0..data.n_features())
        .into_par_iter()
        .map(|f| {
            let mut x = data.x.clone();
            let diffs = (0..repeats)
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(seed, f as u64), r as u64));
                    x[f].clone_from(&data.x[f]);
                    x[f].shuffle(&mut rng);
                    Ok(mse(&data.y, &m.predict_columns(&x)?) - baseline)
                })
                .collect::<Result<Vec<f64>>>()?;
            let k = diffs.len() as f64;
            let mean = diffs.iter().sum::<f64>() / k;
            let std = if diffs.len() > 1 {
                (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            Ok((mean, std))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub name: String,
    pub gini: f64,
    pub permutation_mean: f64,
    pub permutation_std: f64,
    /// 1 is most important; ties keep column order.
    pub gini_rank: usize,
    pub permutation_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub target: String,
    pub features: Vec<FeatureImportance>,
}

fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut rank = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    rank
}

impl ImportanceReport {
    pub fn new(target: &str, names: &[String], gini: &[f64], perm: &[(f64, f64)]) -> Self {
        let pm: Vec<f64> = perm.iter().map(|p| p.0).collect();
        let (gr, pr) = (ranks(gini), ranks(&pm));
        Self {
            target: target.to_string(),
            features: (0..names.len())
                .map(|i| FeatureImportance {
                    name: names[i].clone(),
                    gini: gini[i],
                    permutation_mean: perm[i].0,
                    permutation_std: perm[i].1,
                    gini_rank: gr[i],
                    permutation_rank: pr[i],
                })
                .collect(),
        }
    }

    pub const CSV_HEADER: &'static str = "target,factor,gini,permutation_mean,permutation_std";

    /// Rows without the header, so several targets can share one file.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for f in &self.features {
            let _ = writeln!(
                s,
                "{},{},{:.8},{:.8},{:.8}",
                self.target, f.name, f.gini, f.permutation_mean, f.permutation_std
            );
        }
        s
    }
}

/// Everything reported for one explained series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: String,
    pub cv: CvResult,
    pub chosen: ForestParams,
    /// Final model on its own training window.
    pub in_sample: EvalMetrics,
    /// Final model on the last validation block.
    pub validation: EvalMetrics,
    /// Mean over all folds for the chosen cell.
    pub cv_mean: EvalMetrics,
    pub importance: ImportanceReport,
}

impl TargetReport {
    pub const CSV_HEADER: &'static str = "target,metric,value";

    pub fn metrics_csv_rows(&self) -> String {
        let mut s = String::new();
        for (scheme, m) in [
            ("in_sample", &self.in_sample),
            ("validation", &self.validation),
            ("cv_mean", &self.cv_mean),
        ] {
            for (name, v) in EvalMetrics::NAMES.iter().zip(m.values()) {
                let _ = writeln!(s, "{},{}_{},{:.8}", self.target, name, scheme, v);
            }
        }
        s
    }
}

/// Cross-validates `grid`, refits the winner on all rows before the last
/// validation block and scores importance on that block.
pub fn explain_target(
    target: &str,
    data: &Dataset,
    grid: &[ForestParams],
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<TargetReport> {
    let cv = ts_cross_validate(data, grid, folds, mix_seed(seed, 1))?;
    let chosen = cv.best_params();
    let last = *cv.folds.last().expect("at least one fold");
    let train = data.slice(0..last.train_end);
    let val = data.slice(last.train_end..last.val_end);
    let model = fit_forest(&train, &chosen, mix_seed(seed, 2))?;
    let in_sample = evaluate(&train.y, &model.predict_dataset(&train)?)?;
    let validation = evaluate(&val.y, &model.predict_dataset(&val)?)?;
    let gini = gini_importance(&model);
    let perm = permutation_importance(&model, &val, repeats, mix_seed(seed, 3))?;
    Ok(TargetReport {
        target: target.to_string(),
        cv_mean: cv.cells[cv.best].mean,
        importance: ImportanceReport::new(target, &data.feature_names, &gini, &perm),
        cv,
        chosen,
        in_sample,
        validation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{testdata, MaxFeatures};

    fn p(n_trees: usize) -> ForestParams {
        ForestParams {
            n_trees,
            ..Default::default()
        }
    }

    #[test]
    fn single_split_puts_all_importance_on_one_feature() {
        let q = 80;
        let x1: Vec<f64> = (0..q).map(|i| i as f64).collect();
        let x2: Vec<f64> = (0..q).map(|i| ((i * 11) % 17) as f64).collect();
        let y = x1.iter().map(|&v| if v < 40.0 { 0.0 } else { 1.0 }).collect();
        let d = Dataset::new(vec![x1, x2], y, vec!["a".into(), "b".into()], testdata::dates(q)).unwrap();
        let params = ForestParams {
            n_trees: 1,
            max_depth: Some(1),
            bootstrap: false,
            max_features: MaxFeatures::All,
            ..Default::default()
        };
        let m = fit_forest(&d, &params, 0).unwrap();
        assert_eq!(gini_importance(&m), vec![1.0, 0.0]);
    }

    #[test]
    fn noise_features_carry_little_gini() {
        let d = testdata::linear(2000, 21);
        let m = fit_forest(&d.slice(0..1600), &p(100), 5).unwrap();
        let g = gini_importance(&m);
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(g[0] > g[1] && g[1] > 0.1, "{g:?}");
        for (i, v) in g.iter().enumerate().skip(2) {
            assert!(*v < 0.05, "x{}: {v}", i + 1);
        }
    }

    #[test]
    fn duplicated_feature_with_all_features_keeps_the_total() {
        // Exact ties go to the lower index, so the copy never splits and
        // the forest is unchanged.
        let params = ForestParams {
            n_trees: 20,
            max_features: MaxFeatures::All,
            ..Default::default()
        };
        for s in 0..5 {
            let d = testdata::linear(300, 100 + s);
            let single = gini_importance(&fit_forest(&d, &params, s).unwrap());
            let mut dup = d.clone();
            dup.x.push(d.x[0].clone());
            dup.feature_names.push("x1_copy".into());
            let g = gini_importance(&fit_forest(&dup, &params, s).unwrap());
            assert_eq!(g[10], 0.0);
            assert!((g[0] - single[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_feature_under_subsampling_shares_and_inflates() {
        // A copy doubles the chance that the signal is among the features
        // tried at a node, so the pair together outweighs the original.
        let seeds = 50;
        let (mut single, mut pair, mut copy) = (0.0, 0.0, 0.0);
        for s in 0..seeds {
            let d = testdata::linear(300, 100 + s);
            single += gini_importance(&fit_forest(&d, &p(20), s).unwrap())[0];
            let mut dup = d.clone();
            dup.x.push(d.x[0].clone());
            dup.feature_names.push("x1_copy".into());
            let g = gini_importance(&fit_forest(&dup, &p(20), s).unwrap());
            pair += g[0] + g[10];
            copy += g[10];
        }
        let (single, pair, copy) = (single / seeds as f64, pair / seeds as f64, copy / seeds as f64);
        assert!(copy > 0.1 && pair - copy > 0.1, "copy {copy}, pair {pair}");
        assert!(pair > single && pair - single < 0.15, "single {single}, pair {pair}");
    }

    #[test]
    fn unused_feature_has_exactly_zero_permutation_importance() {
        let d = testdata::linear(300, 3);
        let params = ForestParams {
            n_trees: 10,
            max_depth: Some(2),
            max_features: MaxFeatures::All,
            ..Default::default()
        };
        let m = fit_forest(&d, &params, 1).unwrap();
        let used: std::collections::BTreeSet<usize> = m
            .trees
            .iter()
            .flat_map(|t| t.nodes.iter().filter_map(|n| n.split.map(|s| s.feature)))
            .collect();
        let perm = permutation_importance(&m, &d, 5, 2).unwrap();
        let unused: Vec<usize> = (0..10).filter(|f| !used.contains(f)).collect();
        assert!(!unused.is_empty());
        for f in unused {
            assert_eq!(perm[f], (0.0, 0.0));
        }
    }

    #[test]
    fn permutation_is_deterministic_and_ranks_signal_first() {
        let d = testdata::linear(1000, 8);
        let m = fit_forest(&d.slice(0..800), &p(50), 1).unwrap();
        let val = d.slice(800..1000);
        let a = permutation_importance(&m, &val, 20, 4).unwrap();
        assert_eq!(a, permutation_importance(&m, &val, 20, 4).unwrap());
        let r = ImportanceReport::new("y", &d.feature_names, &gini_importance(&m), &a);
        assert_eq!(r.features[0].permutation_rank, 1);
        assert_eq!(r.features[1].permutation_rank, 2);
        assert_eq!(r.features[0].gini_rank, 1);
        assert!(r.features.iter().all(|f| f.permutation_std >= 0.0));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let d = testdata::linear(100, 1);
        let m = fit_forest(&d, &p(2), 0).unwrap();
        let mut narrow = d.clone();
        narrow.x.pop();
        assert!(matches!(
            permutation_importance(&m, &narrow, 3, 0),
            Err(Error::Prediction { .. })
        ));
    }

    #[test]
    fn report_rows_and_ranks() {
        assert_eq!(ranks(&[0.1, 0.5, 0.1, 0.3]), vec![3, 1, 4, 2]);
        let names = vec!["a".to_string(), "b".to_string()];
        let r = ImportanceReport::new("tci", &names, &[0.25, 0.75], &[(0.5, 0.1), (1.0, 0.0)]);
        assert_eq!(
            r.csv_rows(),
            "tci,a,0.25000000,0.50000000,0.10000000\ntci,b,0.75000000,1.00000000,0.00000000\n"
        );
    }

    #[test]
    fn explain_target_end_to_end() {
        let d = testdata::linear(400, 12);
        let grid = [
            ForestParams {
                n_trees: 15,
                max_depth: Some(3),
                ..Default::default()
            },
            p(15),
        ];
        let r = explain_target("y", &d, &grid, 3, 5, 7).unwrap();
        assert_eq!(r, explain_target("y", &d, &grid, 3, 5, 7).unwrap());
        assert_eq!(r.importance.features.len(), 10);
        assert!(r.validation.r2 > 0.5);
        assert_eq!(r.metrics_csv_rows().lines().count(), 15);
        let json = serde_json::to_string(&r).unwrap();
        let back: TargetReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]
        #[test]
        fn gini_is_a_distribution(seed in 0u64..500, depth in 1usize..6) {
            let d = testdata::linear(120, seed);
            let m = fit_forest(&d, &ForestParams { n_trees: 5, max_depth: Some(depth), ..Default::default() }, seed).unwrap();
            let g = gini_importance(&m);
            proptest::prop_assert!(g.iter().all(|v| *v >= 0.0));
            proptest::prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
