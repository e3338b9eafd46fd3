use serde::{Deserialize, Serialize};

use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};
use crate::stats::{mean, std_dev};

/// Column means and population sds recorded on the fit split, so new rows
/// are transformed with the same parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Constant columns removed at fit time.
    pub dropped: Vec<String>,
}

impl Standardizer {
    pub fn fit(m: &FeatureMatrix) -> Self {
        let mut s = Self {
            names: Vec::new(),
            means: Vec::new(),
            sds: Vec::new(),
            dropped: Vec::new(),
        };
        for (name, col) in m.names.iter().zip(&m.columns) {
            let mu = mean(col);
            let sd = std_dev(col);
            if col.is_empty() || !(sd > 1e-12 * mu.abs().max(1.0)) {
                s.dropped.push(name.clone());
            } else {
                s.names.push(name.clone());
                s.means.push(mu);
                s.sds.push(sd);
            }
        }
        if !s.dropped.is_empty() {
            tracing::warn!(columns = ?s.dropped, "dropping constant feature columns");
        }
        s
    }

    pub fn transform(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        let mut columns = Vec::with_capacity(self.names.len());
        for ((name, mu), sd) in self.names.iter().zip(&self.means).zip(&self.sds) {
            let col = m
                .column(name)
                .ok_or_else(|| Error::InvalidInput(format!("no feature column '{name}'")))?;
            columns.push(col.iter().map(|x| (x - mu) / sd).collect());
        }
        Ok(FeatureMatrix {
            rows: m.rows.clone(),
            names: self.names.clone(),
            columns,
            target: m.target.clone(),
        })
    }

    /// Standardize a single raw row given in `self.names` order.
    pub fn transform_row(&self, row: &mut [f64]) {
        for ((x, mu), sd) in row.iter_mut().zip(&self.means).zip(&self.sds) {
            *x = (*x - mu) / sd;
        }
    }
}

pub fn standardize(m: &FeatureMatrix) -> Result<(FeatureMatrix, Standardizer)> {
    let s = Standardizer::fit(m);
    Ok((s.transform(m)?, s))
}
