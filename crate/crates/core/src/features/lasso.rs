use serde::{Deserialize, Serialize};

use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};
use crate::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Stop when the largest coefficient change in a sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub feature: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoResult {
    pub alpha: f64,
    /// In input column order.
    pub coefficients: Vec<Coefficient>,
    pub intercept: f64,
    pub r_squared: f64,
    /// Nonzero features ordered by |coefficient| descending.
    pub selected: Vec<String>,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after each sweep.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub objective_trace: Vec<f64>,
}

impl LassoResult {
    pub fn coefficient(&self, feature: &str) -> Option<f64> {
        self.coefficients.iter().find(|c| c.feature == feature).map(|c| c.value)
    }

    pub fn nonzero(&self) -> usize {
        self.coefficients.iter().filter(|c| c.value != 0.0).count()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(c, x)| c.value * x).sum::<f64>()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lasso result serializes")
    }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Smallest alpha at which every coefficient is zero: max_j |x_j' y_c| / n.
pub fn critical_alpha(columns: &[Vec<f64>], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let ym = mean(y);
    columns
        .iter()
        .map(|c| {
            let cm = mean(c);
            (c.iter().zip(y).map(|(x, v)| (x - cm) * (v - ym)).sum::<f64>() / n).abs()
        })
        .fold(0.0, f64::max)
}

/// Minimises (1/2n)|y - Xb|^2 + alpha |b|_1 by cyclic coordinate descent.
/// Columns and target are centred internally; the intercept absorbs means.
pub fn lasso_dense(
    names: &[String],
    columns: &[Vec<f64>],
    y: &[f64],
    alpha: f64,
    opts: LassoOptions,
) -> Result<LassoResult> {
    let n = y.len();
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!("alpha must be a nonnegative number, got {alpha}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("lasso needs at least one row".into()));
    }
    if columns.len() != names.len() || columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("lasso design and target disagree in shape".into()));
    }
    if y.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("non-finite value in lasso input".into()));
    }
    let nf = n as f64;
    let ym = mean(y);
    let means: Vec<f64> = columns.iter().map(|c| mean(c)).collect();
    let x: Vec<Vec<f64>> = columns
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|v| v - m).collect())
        .collect();
    let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
    let z: Vec<f64> = x.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf).collect();

    let p = x.len();
    let mut beta = vec![0.0; p];
    let mut resid = yc.clone();
    let objective = |resid: &[f64], beta: &[f64]| {
        resid.iter().map(|r| r * r).sum::<f64>() / (2.0 * nf) + alpha * beta.iter().map(|b| b.abs()).sum::<f64>()
    };
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if z[j] == 0.0 {
                continue;
            }
            let col = &x[j];
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + z[j] * beta[j];
            let new = soft_threshold(rho, alpha) / z[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(col) {
                    *r -= a * delta;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        trace.push(objective(&resid, &beta));
        if max_change < opts.tol {
            converged = true;
            break;
        }
    }

    let sst: f64 = yc.iter().map(|v| v * v).sum();
    let sse: f64 = resid.iter().map(|r| r * r).sum();
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 0.0 };
    let intercept = ym - beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    let coefficients: Vec<Coefficient> = names
        .iter()
        .zip(&beta)
        .map(|(f, &value)| Coefficient {
            feature: f.clone(),
            value,
        })
        .collect();
    let selected = rank(&coefficients);
    Ok(LassoResult {
        alpha,
        coefficients,
        intercept,
        r_squared,
        selected,
        sweeps,
        converged,
        objective_trace: trace,
    })
}

fn rank(coefficients: &[Coefficient]) -> Vec<String> {
    let mut idx: Vec<usize> = (0..coefficients.len()).filter(|&i| coefficients[i].value != 0.0).collect();
    // stable sort keeps column order on ties
    idx.sort_by(|&a, &b| coefficients[b].value.abs().total_cmp(&coefficients[a].value.abs()));
    idx.into_iter().map(|i| coefficients[i].feature.clone()).collect()
}

/// Lasso on a (standardized) feature matrix against its target column.
pub fn lasso_fit(x: &FeatureMatrix, alpha: f64) -> Result<LassoResult> {
    let y = x
        .target
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("feature matrix has no target column".into()))?;
    lasso_dense(&x.names, &x.columns, y, alpha, LassoOptions::default())
}

/// Fits over an alpha grid (each from a cold start).
pub fn lasso_path(x: &FeatureMatrix, alphas: &[f64]) -> Result<Vec<LassoResult>> {
    alphas.iter().map(|&a| lasso_fit(x, a)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub features: Vec<String>,
    /// Fewer than k nonzero coefficients were available.
    pub short_list: bool,
}

pub fn select_top_k(result: &LassoResult, k: usize) -> TopK {
    let all = rank(&result.coefficients);
    let short_list = all.len() < k;
    TopK {
        features: all.into_iter().take(k).collect(),
        short_list,
    }
}
