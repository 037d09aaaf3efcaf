use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, fit_forest, Dataset, EvalMetrics, ForestParams};
use crate::stats::mix_seed;
use crate::{Error, Result};

/// Train on `[0, train_end)`, validate on `[train_end, val_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_end: usize,
    pub val_end: usize,
}

/// Expanding-window folds whose validation blocks tile the tail of the
/// sample. Rows left over from integer division go to the first training
/// window, so the last block ends at `q`.
pub fn expanding_folds(q: usize, folds: usize) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(Error::CrossValidation("need at least two folds".into()));
    }
    let initial = (q / (folds + 1)).max(100);
    if initial >= q {
        return Err(Error::CrossValidation(format!(
            "{q} rows leave nothing to validate after a {initial}-row training window"
        )));
    }
    let block = (q - initial) / folds;
    if block < 2 {
        return Err(Error::CrossValidation(format!(
            "{q} rows give validation blocks of {block} row(s) over {folds} folds"
        )));
    }
    let start = q - folds * block;
    Ok((0..folds)
        .map(|i| Fold {
            train_end: start + i * block,
            val_end: start + (i + 1) * block,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub params: ForestParams,
    pub fold_metrics: Vec<EvalMetrics>,
    pub mean: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<Fold>,
    pub cells: Vec<CvCell>,
    /// Index into `cells`.
    pub best: usize,
}

impl CvResult {
    pub fn best_params(&self) -> ForestParams {
        self.cells[self.best].params
    }
}

fn mean_metrics(ms: &[EvalMetrics]) -> EvalMetrics {
    let k = ms.len() as f64;
    let avg = |f: fn(&EvalMetrics) -> f64| ms.iter().map(f).sum::<f64>() / k;
    EvalMetrics {
        r2: avg(|m| m.r2),
        mae: avg(|m| m.mae),
        mse: avg(|m| m.mse),
        rae: avg(|m| m.rae),
        rse: avg(|m| m.rse),
    }
}

/// Lower mean MSE wins; exact ties prefer fewer trees, then a shallower cap,
/// then grid order.
fn simpler(a: &CvCell, b: &CvCell) -> Ordering {
    let depth = |p: &ForestParams| p.max_depth.unwrap_or(usize::MAX);
    a.mean
        .mse
        .total_cmp(&b.mean.mse)
        .then(a.params.n_trees.cmp(&b.params.n_trees))
        .then(depth(&a.params).cmp(&depth(&b.params)))
}

/// Grid search under expanding-window validation. Cell `c`, fold `i` fits
/// with seed `mix_seed(mix_seed(seed, c), i)`; cells run in parallel.
pub fn ts_cross_validate(data: &Dataset, grid: &[ForestParams], folds: usize, seed: u64) -> Result<CvResult> {
    data.validate()?;
    if grid.is_empty() {
        return Err(Error::CrossValidation("empty hyperparameter grid".into()));
    }
    let fold_spec = expanding_folds(data.len(), folds)?;
    let cells: Vec<CvCell> = grid
        .par_iter()
        .enumerate()
        .map(|(c, params)| {
            let cell_seed = mix_seed(seed, c as u64);
            let fold_metrics = fold_spec
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let model = fit_forest(&data.slice(0..f.train_end), params, mix_seed(cell_seed, i as u64))?;
                    let val = data.slice(f.train_end..f.val_end);
                    evaluate(&val.y, &model.predict_dataset(&val)?)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CvCell {
                params: *params,
                mean: mean_metrics(&fold_metrics),
                fold_metrics,
            })
        })
        .collect::<Result<_>>()?;
    let best = (0..cells.len())
        .min_by(|&a, &b| simpler(&cells[a], &cells[b]).then(a.cmp(&b)))
        .expect("grid is non-empty");
    Ok(CvResult {
        folds: fold_spec,
        cells,
        best,
    })
}
