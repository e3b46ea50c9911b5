use alloc::format;
use alloc::vec::Vec;

use super::{fit, TrainOptions, TrainReport};
use crate::data::Batch;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::model::{SstConfig, SstModel};

/// Value lists for each searchable hyperparameter. Fields not listed here
/// come from `base`. Points are enumerated with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub base: SstConfig,
    pub n_layers: Vec<usize>,
    pub dmodel: Vec<usize>,
    pub dff: Vec<usize>,
    pub n_heads: Vec<usize>,
    pub dropout_rate: Vec<f64>,
    pub lr_factor: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub uncertainty_weighting: Vec<bool>,
    pub max_epochs: Vec<usize>,
}

impl GridSpec {
    /// A one-point grid at `base`.
    pub fn single(base: SstConfig, max_epochs: usize) -> Self {
        GridSpec {
            n_layers: alloc::vec![base.n_layers],
            dmodel: alloc::vec![base.dmodel],
            dff: alloc::vec![base.dff],
            n_heads: alloc::vec![base.n_heads],
            dropout_rate: alloc::vec![base.dropout_rate],
            lr_factor: alloc::vec![base.lr_factor],
            batch_size: alloc::vec![base.batch_size],
            uncertainty_weighting: alloc::vec![base.uncertainty_weighting],
            max_epochs: alloc::vec![max_epochs],
            base,
        }
    }

    fn axis_lengths(&self) -> [usize; 9] {
        [
            self.n_layers.len(),
            self.dmodel.len(),
            self.dff.len(),
            self.n_heads.len(),
            self.dropout_rate.len(),
            self.lr_factor.len(),
            self.batch_size.len(),
            self.uncertainty_weighting.len(),
            self.max_epochs.len(),
        ]
    }

    pub fn size(&self) -> usize {
        self.axis_lengths().iter().product()
    }

    /// Every grid point in lexicographic order. Each point's seed is derived
    /// from the base seed and the point index.
    pub fn points(&self) -> Vec<GridPoint> {
        let lens = self.axis_lengths();
        (0..self.size())
            .map(|index| {
                let mut k = [0usize; 9];
                let mut rest = index;
                for axis in (0..9).rev() {
                    k[axis] = rest % lens[axis];
                    rest /= lens[axis];
                }
                let config = SstConfig {
                    n_layers: self.n_layers[k[0]],
                    dmodel: self.dmodel[k[1]],
                    dff: self.dff[k[2]],
                    n_heads: self.n_heads[k[3]],
                    dropout_rate: self.dropout_rate[k[4]],
                    lr_factor: self.lr_factor[k[5]],
                    batch_size: self.batch_size[k[6]],
                    uncertainty_weighting: self.uncertainty_weighting[k[7]],
                    seed: derive_seed(self.base.seed, index as u64),
                    ..self.base.clone()
                };
                GridPoint { index, config, max_epochs: self.max_epochs[k[8]] }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub config: SstConfig,
    pub max_epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub point: GridPoint,
    pub report: TrainReport,
    /// Mean validation AUC over the tasks that could be scored.
    pub mean_auc: Option<f64>,
}

pub fn run_grid_point(point: &GridPoint, train: &Batch, val: &Batch, patience: usize) -> Result<GridResult> {
    let mut model = SstModel::new(&point.config)?;
    let report = fit(&mut model, train, val, &TrainOptions { max_epochs: point.max_epochs, patience })?;
    let mean_auc = report.val.mean_auc();
    Ok(GridResult { point: point.clone(), report, mean_auc })
}

/// Position of the best `(grid index, mean AUC)` candidate: highest AUC,
/// ties to the lowest grid index, unscored candidates last.
pub fn rank_best(candidates: &[(usize, Option<f64>)]) -> Option<usize> {
    let key = |(i, a): (usize, Option<f64>)| (a.unwrap_or(f64::NEG_INFINITY), i);
    let mut best: Option<usize> = None;
    for (pos, &c) in candidates.iter().enumerate() {
        let better = best.is_none_or(|b| {
            let ((a, i), (ba, bi)) = (key(c), key(candidates[b]));
            a > ba || (a == ba && i < bi)
        });
        if better {
            best = Some(pos);
        }
    }
    best
}

/// Position in `results` of the best point by [`rank_best`].
pub fn select_best(results: &[GridResult]) -> Result<usize> {
    let candidates: Vec<(usize, Option<f64>)> = results.iter().map(|r| (r.point.index, r.mean_auc)).collect();
    rank_best(&candidates).ok_or_else(|| Error::Config("grid search produced no results".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub results: Vec<GridResult>,
    pub best: usize,
}

impl GridOutcome {
    pub fn best_result(&self) -> &GridResult {
        &self.results[self.best]
    }
}

/// Train every grid point sequentially and pick the best by validation AUC.
pub fn grid_search(spec: &GridSpec, train: &Batch, val: &Batch, patience: usize) -> Result<GridOutcome> {
    if spec.size() == 0 {
        return Err(Error::Config(format!("empty grid (axis lengths {:?})", spec.axis_lengths())));
    }
    let results = spec
        .points()
        .iter()
        .map(|p| run_grid_point(p, train, val, patience))
        .collect::<Result<Vec<_>>>()?;
    let best = select_best(&results)?;
    Ok(GridOutcome { results, best })
}
