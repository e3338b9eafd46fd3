use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{GeoHierarchy, GeoLevel, PanelDataset, VariableId};
use crate::stats::pearson;

/// Cross-correlation r(k) = corr(x[t-k], y[t]) for k in -max_lag..=max_lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcfResult {
    pub lags: Vec<i32>,
    pub r: Vec<f64>,
    /// Significance half-width 2/sqrt(n).
    pub band: f64,
    /// Set when either series has zero variance over some overlap window.
    pub degenerate: bool,
}

impl CcfResult {
    pub fn at(&self, lag: i32) -> Option<f64> {
        self.lags.iter().position(|&k| k == lag).map(|i| self.r[i])
    }

    pub fn significant(&self) -> Vec<i32> {
        self.lags
            .iter()
            .zip(&self.r)
            .filter(|(_, r)| r.abs() > self.band)
            .map(|(&k, _)| k)
            .collect()
    }
}

pub fn ccf(x: &[f64], y: &[f64], max_lag: usize) -> Result<CcfResult> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::InvalidInput(format!("ccf needs equal lengths, got {n} and {}", y.len())));
    }
    if n <= max_lag + 2 {
        return Err(Error::SeriesTooShort {
            needed: max_lag + 3,
            got: n,
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("non-finite value in ccf input".into()));
    }
    let m = max_lag as i32;
    let mut lags = Vec::new();
    let mut r = Vec::new();
    let mut degenerate = false;
    for k in -m..=m {
        // pairs (x[t-k], y[t]) over the overlap
        let (xs, ys) = if k >= 0 {
            (&x[..n - k as usize], &y[k as usize..])
        } else {
            (&x[(-k) as usize..], &y[..n - (-k) as usize])
        };
        let c = pearson(xs, ys).unwrap_or_else(|| {
            degenerate = true;
            0.0
        });
        lags.push(k);
        r.push(c);
    }
    Ok(CcfResult {
        lags,
        r,
        band: 2.0 / (n as f64).sqrt(),
        degenerate,
    })
}

/// Per-predictor screening across ICB series: for each lag, the share of
/// ICBs whose correlation leaves the significance band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    pub variable: VariableId,
    pub lags: Vec<i32>,
    pub share_significant: Vec<f64>,
    pub mean_r: Vec<f64>,
    /// Positive lags flagged in a majority of series.
    pub flagged: Vec<i32>,
}

pub fn screen_predictors(
    panel: &PanelDataset,
    hierarchy: &GeoHierarchy,
    target: VariableId,
    predictors: &[VariableId],
    max_lag: usize,
) -> Result<Vec<Screening>> {
    let icbs: Vec<&str> = panel
        .nodes_with(target)
        .into_iter()
        .filter(|n| hierarchy.node(n).is_some_and(|g| g.level == GeoLevel::Icb))
        .collect();
    if icbs.is_empty() {
        return Err(Error::MissingCells(format!("no ICB series for {target}")));
    }
    let mut out = Vec::new();
    for &v in predictors {
        let mut hits = vec![0usize; 2 * max_lag + 1];
        let mut sum_r = vec![0.0; 2 * max_lag + 1];
        let mut lags = Vec::new();
        for &node in &icbs {
            let y = panel.require(node, target)?;
            let (_, x) = panel
                .resolve(hierarchy, node, v)
                .ok_or_else(|| Error::MissingCells(format!("no {v} series for node {node}")))?;
            let c = ccf(x, y, max_lag)?;
            for (i, r) in c.r.iter().enumerate() {
                sum_r[i] += r;
                if r.abs() > c.band {
                    hits[i] += 1;
                }
            }
            lags = c.lags;
        }
        let total = icbs.len() as f64;
        let share: Vec<f64> = hits.iter().map(|&h| h as f64 / total).collect();
        let flagged = lags
            .iter()
            .zip(&share)
            .filter(|(&k, &s)| k > 0 && s > 0.5)
            .map(|(&k, _)| k)
            .collect();
        out.push(Screening {
            variable: v,
            lags,
            share_significant: share,
            mean_r: sum_r.iter().map(|s| s / total).collect(),
            flagged,
        });
    }
    Ok(out)
}
