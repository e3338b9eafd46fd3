use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conformal::conformal_interval;
use super::gbdt::{fit_gbdt, GbdtParams};
use super::path::{ForecastPath, ModelFamily, ModelSpec};
use crate::calendar::{Month, MonthSpan};
use crate::error::{Error, Result};
use crate::panel::{PanelDataset, SeriesKey, VariableId};

/// Lags of the relative first difference used as predictor-model inputs.
pub const PREDICTOR_LAGS: [usize; 4] = [1, 2, 3, 12];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DemandScenario {
    Base,
    High,
    Low,
}

impl DemandScenario {
    pub const ALL: [DemandScenario; 3] = [DemandScenario::Base, DemandScenario::High, DemandScenario::Low];

    pub fn code(self) -> &'static str {
        match self {
            DemandScenario::Base => "BASE",
            DemandScenario::High => "HIGH",
            DemandScenario::Low => "LOW",
        }
    }
}

impl fmt::Display for DemandScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for DemandScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DemandScenario::ALL
            .into_iter()
            .find(|d| d.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown demand scenario '{s}'")))
    }
}

/// Future paths with bounds for every forecast predictor series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorForecasts {
    pub origin: Month,
    pub horizon: usize,
    #[serde(with = "keyed")]
    pub paths: BTreeMap<SeriesKey, ForecastPath>,
}

/// JSON object keys must be strings, so the map travels as a list.
mod keyed {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::forecast::path::ForecastPath;
    use crate::panel::SeriesKey;

    #[derive(Serialize, Deserialize)]
    struct Entry<P> {
        #[serde(flatten)]
        key: SeriesKey,
        path: P,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<SeriesKey, ForecastPath>, s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<Entry<&ForecastPath>> = map.iter().map(|(k, p)| Entry { key: k.clone(), path: p }).collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<SeriesKey, ForecastPath>, D::Error> {
        let list = Vec::<Entry<ForecastPath>>::deserialize(d)?;
        Ok(list.into_iter().map(|e| (e.key, e.path)).collect())
    }
}

impl PredictorForecasts {
    pub fn span(&self) -> MonthSpan {
        MonthSpan::new(self.origin.next(), self.horizon)
    }

    pub fn get(&self, node: &str, v: VariableId) -> Option<&ForecastPath> {
        self.paths.get(&SeriesKey::new(node, v))
    }

    /// Future exogenous panel for a demand scenario: patient predictors take
    /// their upper (HIGH) or lower (LOW) bound, everything else its point path.
    pub fn scenario_panel(&self, scenario: DemandScenario) -> Result<PanelDataset> {
        let mut out = PanelDataset::new(self.span());
        for (key, path) in &self.paths {
            let values = match (scenario, key.variable.is_patient()) {
                (DemandScenario::High, true) => path.hi95.clone(),
                (DemandScenario::Low, true) => path.lo95.clone(),
                _ => path.point.clone(),
            };
            out.insert(key.node.clone(), key.variable, values)?;
        }
        Ok(out)
    }
}

fn clamp_for(v: VariableId, x: f64) -> f64 {
    if v.is_rate() {
        x.clamp(0.0, 1.0)
    } else {
        x.max(0.0)
    }
}

fn predictor_row(d: &[f64], pos: usize, month: Month, code: usize) -> Vec<f64> {
    let mut row: Vec<f64> = PREDICTOR_LAGS.iter().map(|&k| d[pos - k]).collect();
    row.push(month.month_of_year() as f64);
    row.push(code as f64);
    row
}

/// One global boosted model per variable, over all nodes that carry it,
/// trained on first differences scaled by each node's mean level, then run
/// recursively. Bounds are point +/- a conformal width.
fn forecast_variable(panel: &PanelDataset, v: VariableId, h: usize, params: GbdtParams) -> Result<Vec<ForecastPath>> {
    let nodes = panel.nodes_with(v);
    if nodes.is_empty() {
        return Err(Error::MissingCells(format!("predictor {v} is absent from the panel")));
    }
    let span = panel.span();
    let n = span.len;
    let first = PREDICTOR_LAGS.iter().max().copied().unwrap() + 1;
    if n < first + 13 {
        return Err(Error::SeriesTooShort { needed: first + 13, got: n });
    }
    let cutoff = n - 12;
    let mut scales = Vec::new();
    let mut diffs = Vec::new();
    for node in &nodes {
        let x = panel.require(node, v)?;
        let s = x.iter().map(|a| a.abs()).sum::<f64>() / n as f64;
        let s = if s > 0.0 { s } else { 1.0 };
        let mut d = vec![0.0; n];
        for t in 1..n {
            d[t] = (x[t] - x[t - 1]) / s;
        }
        scales.push(s);
        diffs.push(d);
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    let mut in_train = Vec::new();
    for (code, d) in diffs.iter().enumerate() {
        for pos in first..n {
            rows.push(predictor_row(d, pos, span.month(pos), code));
            y.push(d[pos]);
            in_train.push(pos < cutoff);
        }
    }
    let cols = |mask: Option<bool>| -> (Vec<Vec<f64>>, Vec<f64>) {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| mask.is_none_or(|m| in_train[i] == m)).collect();
        let width = rows[0].len();
        (
            (0..width).map(|j| idx.iter().map(|&i| rows[i][j]).collect()).collect(),
            idx.iter().map(|&i| y[i]).collect(),
        )
    };
    let (tx, ty) = cols(Some(true));
    let calib = fit_gbdt(&tx, &ty, params)?;
    let resid: Vec<f64> = (0..rows.len())
        .filter(|&i| !in_train[i])
        .map(|i| y[i] - calib.predict(&rows[i]))
        .collect();
    // one width per node-scaled unit, shared across nodes
    let width = conformal_interval(&resid)?;
    let (ax, ay) = cols(None);
    let model = fit_gbdt(&ax, &ay, params)?;

    let spec = ModelSpec::new(ModelFamily::Gbdt)
        .with("variable", v.code())
        .with("target", "relative_diff")
        .with("n_trees", params.n_trees)
        .with("max_depth", params.max_depth)
        .with("learning_rate", params.learning_rate)
        .with("min_leaf", params.min_leaf)
        .with("conformal_width", width.width);
    let origin = span.end();
    let mut out = Vec::new();
    for (code, node) in nodes.iter().enumerate() {
        let x = panel.require(node, v)?;
        let s = scales[code];
        let mut d = diffs[code].clone();
        let mut level = x[n - 1];
        let mut point = Vec::with_capacity(h);
        for step in 0..h {
            let pos = n + step;
            let pred = model.predict(&predictor_row(&d, pos, origin.offset(step as i32 + 1), code));
            let next = clamp_for(v, level + pred * s);
            // feed back the change actually realised after clamping
            d.push((next - level) / s);
            level = next;
            point.push(next);
        }
        let w = width.width * s;
        let lo = point.iter().map(|p| clamp_for(v, p - w)).collect();
        let hi = point.iter().map(|p| clamp_for(v, p + w)).collect();
        let mut path = ForecastPath::new(node, spec.clone(), origin, point, lo, hi)?;
        if width.degenerate {
            path = path.flag("degenerate_interval");
        }
        out.push(path);
    }
    Ok(out)
}

/// Forecasts every requested predictor over `h` months. Population series
/// are copied from `projection` verbatim and never modelled.
pub fn forecast_predictors(
    panel: &PanelDataset,
    variables: &[VariableId],
    h: usize,
    projection: Option<&PanelDataset>,
    params: GbdtParams,
) -> Result<PredictorForecasts> {
    let origin = panel.span().end();
    let mut vars: Vec<VariableId> = variables.to_vec();
    vars.sort();
    vars.dedup();
    let modelled: Vec<VariableId> = vars.iter().copied().filter(|v| !v.is_population()).collect();
    let results: Vec<Vec<ForecastPath>> = modelled
        .par_iter()
        .map(|&v| forecast_variable(panel, v, h, params))
        .collect::<Result<_>>()?;
    let mut paths = BTreeMap::new();
    for (v, ps) in modelled.iter().zip(results) {
        for p in ps {
            paths.insert(SeriesKey::new(p.node.clone(), *v), p);
        }
    }
    for v in vars.iter().copied().filter(|v| v.is_population()) {
        let proj = projection.ok_or_else(|| {
            Error::InvalidInput(format!("{v} must come from a population projection file, none supplied"))
        })?;
        let ps = proj.span();
        if ps.start != origin.next() || ps.len < h {
            return Err(Error::SpanMismatch(format!(
                "projection covers {}..{}, forecast needs {}..{}",
                ps.start,
                ps.end(),
                origin.next(),
                origin.offset(h as i32)
            )));
        }
        let nodes = panel.nodes_with(v);
        if nodes.is_empty() {
            return Err(Error::MissingCells(format!("predictor {v} is absent from the panel")));
        }
        for node in nodes {
            let values = proj
                .get(node, v)
                .ok_or_else(|| Error::MissingCells(format!("projection has no {v} series for {node}")))?[..h]
                .to_vec();
            let spec = ModelSpec::new(ModelFamily::Projection);
            let path = ForecastPath::new(node, spec, origin, values.clone(), values.clone(), values)?.flag("passthrough");
            paths.insert(SeriesKey::new(node, v), path);
        }
    }
    Ok(PredictorForecasts {
        origin,
        horizon: h,
        paths,
    })
}
