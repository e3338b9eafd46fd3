use serde::{Deserialize, Serialize};

use super::conformal::{conformal_interval, ConformalWidth};
use super::gbdt::{fit_gbdt, grid_search_gbdt, Gbdt, GbdtParams, GridResult};
use super::linreg::{fit_ols, LinearModel};
use super::path::{ForecastPath, ModelFamily, ModelSpec};
use crate::calendar::{Month, MonthSpan};
use crate::error::{Error, Result};
use crate::features::{FeatureContext, FeatureMatrix, FeatureSpec, Standardizer};
use crate::panel::{GeoHierarchy, PanelDataset, VariableId};

/// What the regressor predicts: the target level, or its month-on-month
/// change (added back to the previous level during recursion).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetTransform {
    Level,
    Diff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Regressor {
    Linear(LinearModel),
    Gbdt(Gbdt),
}

impl Regressor {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Regressor::Linear(m) => m.predict(row),
            Regressor::Gbdt(m) => m.predict(row),
        }
    }
}

/// A model fitted once across all ICBs and applied per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalModel {
    pub family: ModelFamily,
    pub target: VariableId,
    pub specs: Vec<FeatureSpec>,
    /// Applied to raw rows before prediction (linear models only).
    pub standardizer: Option<Standardizer>,
    pub transform: TargetTransform,
    pub regressor: Regressor,
    pub width: ConformalWidth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GlobalConfig {
    Linreg,
    Gbdt { grid: Vec<GbdtParams> },
}

struct Training {
    matrix: FeatureMatrix,
    y: Vec<f64>,
}

fn training_rows(
    panel: &PanelDataset,
    hierarchy: &GeoHierarchy,
    nodes: &[&str],
    specs: &[FeatureSpec],
    target: VariableId,
    transform: TargetTransform,
) -> Result<Training> {
    let m = FeatureMatrix::build(panel, hierarchy, nodes, specs, Some(target))?;
    let span = panel.span();
    let keep: Vec<bool> = m
        .rows
        .iter()
        .map(|r| transform == TargetTransform::Level || span.position(r.month).unwrap_or(0) >= 1)
        .collect();
    let m = m.take_rows(&keep);
    let y = match transform {
        TargetTransform::Level => m.target.clone().expect("target requested"),
        TargetTransform::Diff => m
            .rows
            .iter()
            .map(|r| {
                let s = panel.require(&r.node, target)?;
                let pos = span.position(r.month).expect("row inside span");
                Ok(s[pos] - s[pos - 1])
            })
            .collect::<Result<_>>()?,
    };
    Ok(Training { matrix: m, y })
}

fn fit_regressor(
    config: &GlobalConfig,
    m: &FeatureMatrix,
    y: &[f64],
    params: Option<GbdtParams>,
) -> Result<(Regressor, Option<Standardizer>)> {
    match config {
        GlobalConfig::Linreg => {
            let s = Standardizer::fit(m);
            let z = s.transform(m)?;
            Ok((Regressor::Linear(fit_ols(&z.names, &z.columns, y)?), Some(s)))
        }
        GlobalConfig::Gbdt { .. } => {
            let p = params.expect("parameters chosen before fitting");
            Ok((Regressor::Gbdt(fit_gbdt(&m.columns, y, p)?), None))
        }
    }
}

fn predict_rows(reg: &Regressor, st: &Option<Standardizer>, m: &FeatureMatrix) -> Result<Vec<f64>> {
    let m = match st {
        Some(s) => s.transform(m)?,
        None => m.clone(),
    };
    Ok((0..m.n_rows()).map(|i| reg.predict(&m.row(i))).collect())
}

/// Fits a global model. The conformal width comes from a fit that excludes
/// the final 12 months; the returned model is then refitted on all rows.
pub fn fit_global(
    panel: &PanelDataset,
    hierarchy: &GeoHierarchy,
    nodes: &[&str],
    specs: &[FeatureSpec],
    target: VariableId,
    transform: TargetTransform,
    config: &GlobalConfig,
) -> Result<GlobalModel> {
    let t = training_rows(panel, hierarchy, nodes, specs, target, transform)?;
    if t.y.is_empty() {
        return Err(Error::ModelFit("no training rows for global model".into()));
    }
    let mut months: Vec<Month> = t.matrix.rows.iter().map(|r| r.month).collect();
    months.sort();
    months.dedup();
    if months.len() < 13 {
        return Err(Error::SeriesTooShort {
            needed: 13,
            got: months.len(),
        });
    }
    let cutoff = months[months.len() - 12];

    let (family, grid, params) = match config {
        GlobalConfig::Linreg => (ModelFamily::Linreg, None, None),
        GlobalConfig::Gbdt { grid } => {
            let row_months: Vec<Month> = t.matrix.rows.iter().map(|r| r.month).collect();
            let g = if grid.len() == 1 {
                None
            } else {
                Some(grid_search_gbdt(&t.matrix.columns, &t.y, &row_months, grid)?)
            };
            let best = g.as_ref().map_or(grid[0], |g| g.best);
            (ModelFamily::Gbdt, g, Some(best))
        }
    };

    let train_idx: Vec<bool> = t.matrix.rows.iter().map(|r| r.month < cutoff).collect();
    let subset = |keep: bool| {
        let mask: Vec<bool> = train_idx.iter().map(|&k| k == keep).collect();
        let m = t.matrix.take_rows(&mask);
        let y: Vec<f64> = t.y.iter().zip(&train_idx).filter(|(_, &k)| k == keep).map(|(v, _)| *v).collect();
        (m, y)
    };
    let (train_m, train_y) = subset(true);
    let (cal_m, cal_y) = subset(false);
    let (reg, st) = fit_regressor(config, &train_m, &train_y, params)?;
    let pred = predict_rows(&reg, &st, &cal_m)?;
    let resid: Vec<f64> = cal_y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let width = conformal_interval(&resid)?;

    let (regressor, standardizer) = fit_regressor(config, &t.matrix, &t.y, params)?;
    // the standardizer may drop constant columns; keep specs aligned
    let specs = match &standardizer {
        Some(s) => s.names.iter().map(|n| n.parse()).collect::<Result<Vec<FeatureSpec>>>()?,
        None => specs.to_vec(),
    };
    let standardizer = standardizer.map(|s| Standardizer { dropped: vec![], ..s });
    Ok(GlobalModel {
        family,
        target,
        specs,
        standardizer,
        transform,
        regressor,
        width,
        grid,
    })
}

impl GlobalModel {
    pub fn spec(&self) -> ModelSpec {
        let mut s = ModelSpec::new(self.family)
            .with("features", self.specs.len())
            .with("transform", serde_json::to_value(self.transform).unwrap())
            .with("conformal_width", self.width.width);
        if let Regressor::Gbdt(g) = &self.regressor {
            s = s
                .with("n_trees", g.params.n_trees)
                .with("max_depth", g.params.max_depth)
                .with("learning_rate", g.params.learning_rate)
                .with("min_leaf", g.params.min_leaf);
        }
        if let Regressor::Linear(l) = &self.regressor {
            s = s.with("rank_deficient", l.rank_deficient);
        }
        s
    }

    /// Recursive multi-step forecast for `node`. `extended` holds history
    /// followed by future exogenous paths; the target is read from history
    /// up to `origin` and then from the model's own predictions.
    pub fn forecast(
        &self,
        extended: &PanelDataset,
        hierarchy: &GeoHierarchy,
        node: &str,
        origin: Month,
        h: usize,
    ) -> Result<ForecastPath> {
        let span = extended.span();
        let origin_pos = span
            .position(origin)
            .ok_or_else(|| Error::InvalidInput(format!("origin {origin} outside the extended panel")))?;
        if origin_pos + h >= span.len {
            return Err(Error::InvalidInput(format!(
                "extended panel ends at {}, forecast needs {}",
                span.end(),
                origin.offset(h as i32)
            )));
        }
        let history = extended.require(node, self.target)?;
        let mut work: Vec<f64> = history[..=origin_pos].to_vec();
        let ctx = FeatureContext::new(extended, hierarchy);
        let mut point = Vec::with_capacity(h);
        for step in 0..h {
            let pos = origin_pos + 1 + step;
            let mut row = ctx
                .row_with(&self.specs, node, pos, &[(self.target, work.as_slice())])?
                .ok_or_else(|| Error::InvalidInput(format!("feature lookback underflows at step {step}")))?;
            if let Some((i, _)) = row.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::MissingCells(format!(
                    "no future value of {} for {node} at {}",
                    self.specs[i],
                    span.month(pos)
                )));
            }
            if let Some(s) = &self.standardizer {
                s.transform_row(&mut row);
            }
            let pred = self.regressor.predict(&row);
            let level = match self.transform {
                TargetTransform::Level => pred,
                TargetTransform::Diff => work[pos - 1] + pred,
            };
            work.push(level);
            point.push(level);
        }
        let w = self.width.width;
        let lo = point.iter().map(|p| p - w).collect();
        let hi = point.iter().map(|p| p + w).collect();
        let path = ForecastPath::new(node, self.spec(), origin, point, lo, hi)?;
        Ok(if self.width.degenerate {
            path.flag("degenerate_interval")
        } else {
            path
        })
    }
}

/// History followed by `future`. Series missing from `future` (such as the
/// target) are padded with NaN so any accidental read is caught.
pub fn extend_panel(history: &PanelDataset, future: &PanelDataset) -> Result<PanelDataset> {
    let hs = history.span();
    let fs = future.span();
    if fs.len > 0 && fs.start != hs.end().next() {
        return Err(Error::SpanMismatch(format!(
            "future starts at {}, history ends at {}",
            fs.start,
            hs.end()
        )));
    }
    let mut out = PanelDataset::new(MonthSpan::new(hs.start, hs.len + fs.len));
    for (key, values) in history.series() {
        let mut v = values.clone();
        match future.get(&key.node, key.variable) {
            Some(f) => v.extend_from_slice(f),
            None => v.extend(std::iter::repeat_n(f64::NAN, fs.len)),
        }
        out.insert(key.node.clone(), key.variable, v)?;
    }
    for (key, values) in future.series() {
        if history.get(&key.node, key.variable).is_none() {
            let mut v = vec![f64::NAN; hs.len];
            v.extend_from_slice(values);
            out.insert(key.node.clone(), key.variable, v)?;
        }
    }
    Ok(out)
}
