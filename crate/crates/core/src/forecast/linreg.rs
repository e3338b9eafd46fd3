use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::mean;

/// Ordinary least squares with an intercept. Solved through the SVD of the
/// centred design, which yields the minimum-norm solution when rank deficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub rank: usize,
    pub rank_deficient: bool,
}

impl LinearModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

pub fn fit_ols(names: &[String], columns: &[Vec<f64>], y: &[f64]) -> Result<LinearModel> {
    let n = y.len();
    let p = columns.len();
    if n == 0 {
        return Err(Error::InvalidInput("regression needs at least one row".into()));
    }
    if names.len() != p || columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("regression design and target disagree in shape".into()));
    }
    if y.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("non-finite value in regression input".into()));
    }
    let ym = mean(y);
    let means: Vec<f64> = columns.iter().map(|c| mean(c)).collect();
    if p == 0 {
        return Ok(LinearModel {
            names: vec![],
            intercept: ym,
            coefficients: vec![],
            rank: 0,
            rank_deficient: false,
        });
    }
    let x = DMatrix::from_fn(n, p, |i, j| columns[j][i] - means[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * (n.max(p) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let beta = svd
        .solve(&yc, eps)
        .map_err(|e| Error::ModelFit(format!("least squares solve failed: {e}")))?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = ym - coefficients.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel {
        names: names.to_vec(),
        intercept,
        coefficients,
        rank,
        rank_deficient: rank < p,
    })
}
