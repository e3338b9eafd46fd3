use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::Month;
use crate::error::{Error, Result};
use crate::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf: 5,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "learning rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidInput("min leaf size must be at least 1".into()));
        }
        Ok(())
    }
}

/// T in {100, 300}, D in {3, 5}, eta in {0.05, 0.1}, min leaf in {5, 20}.
pub fn default_grid() -> Vec<GbdtParams> {
    let mut g = Vec::new();
    for n_trees in [100, 300] {
        for max_depth in [3, 5] {
            for learning_rate in [0.05, 0.1] {
                for min_leaf in [5, 20] {
                    g.push(GbdtParams {
                        n_trees,
                        max_depth,
                        learning_rate,
                        min_leaf,
                    });
                }
            }
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf(f64),
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf(v) => return *v,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbdt {
    pub params: GbdtParams,
    pub base: f64,
    pub trees: Vec<Tree>,
    /// Training MSE after F0 and after each tree.
    pub loss: Vec<f64>,
    pub n_features: usize,
}

impl Gbdt {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.base + self.params.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    sorted: &'a [Vec<usize>],
    min_leaf: usize,
    max_depth: usize,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    /// Level-wise growth: every open node at a depth is split in one pass
    /// over each presorted feature.
    fn grow(&self, resid: &[f64]) -> Tree {
        let n = resid.len();
        let mut assign = vec![0usize; n];
        let mut nodes = vec![TreeNode::Leaf(mean(resid))];
        let mut open: Vec<usize> = vec![0];
        for _ in 0..self.max_depth {
            if open.is_empty() {
                break;
            }
            // slot per open node
            let mut slot = vec![usize::MAX; nodes.len()];
            for (s, &id) in open.iter().enumerate() {
                slot[id] = s;
            }
            let k = open.len();
            let mut tot_sum = vec![0.0; k];
            let mut tot_cnt = vec![0usize; k];
            for i in 0..n {
                let s = slot[assign[i]];
                if s != usize::MAX {
                    tot_sum[s] += resid[i];
                    tot_cnt[s] += 1;
                }
            }
            let mut best: Vec<Option<Best>> = vec![None; k];
            let mut l_sum = vec![0.0; k];
            let mut l_cnt = vec![0usize; k];
            let mut last_x = vec![f64::NAN; k];
            for (f, order) in self.sorted.iter().enumerate() {
                let col = &self.columns[f];
                l_sum.iter_mut().for_each(|v| *v = 0.0);
                l_cnt.iter_mut().for_each(|v| *v = 0);
                last_x.iter_mut().for_each(|v| *v = f64::NAN);
                for &i in order {
                    let s = slot[assign[i]];
                    if s == usize::MAX {
                        continue;
                    }
                    let x = col[i];
                    // candidate split between the previous value and this one
                    if l_cnt[s] >= self.min_leaf && tot_cnt[s] - l_cnt[s] >= self.min_leaf && x > last_x[s] {
                        let (ls, lc) = (l_sum[s], l_cnt[s] as f64);
                        let (rs, rc) = (tot_sum[s] - ls, (tot_cnt[s] - l_cnt[s]) as f64);
                        let gain = ls * ls / lc + rs * rs / rc - tot_sum[s] * tot_sum[s] / tot_cnt[s] as f64;
                        if best[s].is_none_or(|b| gain > b.gain) {
                            best[s] = Some(Best {
                                gain,
                                feature: f,
                                threshold: last_x[s] + (x - last_x[s]) / 2.0,
                            });
                        }
                    }
                    l_sum[s] += resid[i];
                    l_cnt[s] += 1;
                    last_x[s] = x;
                }
            }
            let mut next_open = Vec::new();
            let mut split_of = vec![None; nodes.len()];
            for (s, &id) in open.iter().enumerate() {
                let Some(b) = best[s] else { continue };
                if !(b.gain > 1e-12 * (1.0 + tot_sum[s].abs())) {
                    continue;
                }
                let left = nodes.len();
                nodes.push(TreeNode::Leaf(0.0));
                nodes.push(TreeNode::Leaf(0.0));
                nodes[id] = TreeNode::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left,
                    right: left + 1,
                };
                split_of[id] = Some((b.feature, b.threshold, left));
                next_open.push(left);
                next_open.push(left + 1);
            }
            for i in 0..n {
                if let Some((f, t, left)) = split_of[assign[i]] {
                    assign[i] = if self.columns[f][i] <= t { left } else { left + 1 };
                }
            }
            // leaf values are the mean residual of their members
            let mut sums = vec![0.0; nodes.len()];
            let mut cnts = vec![0usize; nodes.len()];
            for i in 0..n {
                sums[assign[i]] += resid[i];
                cnts[assign[i]] += 1;
            }
            for &id in &next_open {
                nodes[id] = TreeNode::Leaf(if cnts[id] > 0 { sums[id] / cnts[id] as f64 } else { 0.0 });
            }
            open = next_open;
        }
        Tree { nodes }
    }
}

/// Squared-error gradient boosting: F0 = mean(y), then each tree is fitted
/// to the current residuals and added with shrinkage.
pub fn fit_gbdt(columns: &[Vec<f64>], y: &[f64], params: GbdtParams) -> Result<Gbdt> {
    params.validate()?;
    let n = y.len();
    if n == 0 {
        return Err(Error::InvalidInput("cannot fit boosted trees on an empty matrix".into()));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("feature columns and target differ in length".into()));
    }
    if y.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("non-finite value in boosting input".into()));
    }
    let sorted: Vec<Vec<usize>> = columns
        .iter()
        .map(|c| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| c[a].total_cmp(&c[b]));
            idx
        })
        .collect();
    let grower = Grower {
        columns,
        sorted: &sorted,
        min_leaf: params.min_leaf,
        max_depth: params.max_depth,
    };
    let base = mean(y);
    let mut fitted = vec![base; n];
    let mse = |fitted: &[f64]| fitted.iter().zip(y).map(|(f, v)| (v - f).powi(2)).sum::<f64>() / n as f64;
    let mut loss = vec![mse(&fitted)];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut resid = vec![0.0; n];
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for _ in 0..params.n_trees {
        for i in 0..n {
            resid[i] = y[i] - fitted[i];
        }
        let tree = grower.grow(&resid);
        if rows.is_empty() {
            rows = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
        }
        for (f, row) in fitted.iter_mut().zip(&rows) {
            *f += params.learning_rate * tree.predict(row);
        }
        loss.push(mse(&fitted));
        trees.push(tree);
    }
    Ok(Gbdt {
        params,
        base,
        trees,
        loss,
        n_features: columns.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub params: GbdtParams,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: GbdtParams,
    pub scores: Vec<GridScore>,
}

/// Fits every grid point on all months but the last 12 and scores one-step
/// MAE on those 12. Ties prefer fewer trees, then shallower trees.
pub fn grid_search_gbdt(columns: &[Vec<f64>], y: &[f64], months: &[Month], grid: &[GbdtParams]) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("grid search needs at least one grid point".into()));
    }
    if months.len() != y.len() {
        return Err(Error::InvalidInput("row months and target differ in length".into()));
    }
    let mut distinct: Vec<Month> = months.to_vec();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 24 {
        return Err(Error::SeriesTooShort {
            needed: 24,
            got: distinct.len(),
        });
    }
    let cutoff = distinct[distinct.len() - 12];
    let train: Vec<usize> = (0..y.len()).filter(|&i| months[i] < cutoff).collect();
    let valid: Vec<usize> = (0..y.len()).filter(|&i| months[i] >= cutoff).collect();
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            idx.iter().map(|&i| y[i]).collect(),
        )
    };
    let (tx, ty) = pick(&train);
    let scores: Vec<GridScore> = grid
        .par_iter()
        .map(|&params| {
            let model = fit_gbdt(&tx, &ty, params)?;
            let mae = valid
                .iter()
                .map(|&i| {
                    let row: Vec<f64> = columns.iter().map(|c| c[i]).collect();
                    (y[i] - model.predict(&row)).abs()
                })
                .sum::<f64>()
                / valid.len() as f64;
            Ok(GridScore { params, mae })
        })
        .collect::<Result<_>>()?;
    let best = scores
        .iter()
        .fold(None::<&GridScore>, |acc, s| match acc {
            None => Some(s),
            Some(a) => {
                let better = s.mae < a.mae
                    || (s.mae == a.mae
                        && (s.params.n_trees, s.params.max_depth) < (a.params.n_trees, a.params.max_depth));
                Some(if better { s } else { a })
            }
        })
        .expect("non-empty grid")
        .params;
    Ok(GridResult { best, scores })
}
