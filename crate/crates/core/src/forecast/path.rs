use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calendar::Month;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelFamily {
    Snaive,
    Ets,
    Arima,
    Linreg,
    Gbdt,
    /// Externally supplied path copied verbatim (population projections).
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scope {
    PerSeries,
    Global,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [
        ModelFamily::Snaive,
        ModelFamily::Ets,
        ModelFamily::Arima,
        ModelFamily::Linreg,
        ModelFamily::Gbdt,
    ];

    pub fn scope(self) -> Scope {
        match self {
            ModelFamily::Snaive | ModelFamily::Ets | ModelFamily::Arima | ModelFamily::Projection => Scope::PerSeries,
            ModelFamily::Linreg | ModelFamily::Gbdt => Scope::Global,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            ModelFamily::Snaive => "SNAIVE",
            ModelFamily::Ets => "ETS",
            ModelFamily::Arima => "ARIMA",
            ModelFamily::Linreg => "LINREG",
            ModelFamily::Gbdt => "GBDT",
            ModelFamily::Projection => "PROJECTION",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::ALL
            .into_iter()
            .find(|m| m.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown model family '{s}'")))
    }
}

/// Family plus the hyperparameters actually used, e.g. ETS form or ARIMA order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub scope: Scope,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
}

impl ModelSpec {
    pub fn new(family: ModelFamily) -> Self {
        Self {
            family,
            scope: family.scope(),
            hyperparameters: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.hyperparameters.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPath {
    pub node: String,
    pub model: ModelSpec,
    /// Month of the last observation.
    pub origin: Month,
    pub horizon: usize,
    pub point: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
    /// Notes such as "degenerate_interval" or "fallback".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl ForecastPath {
    /// Builds a path, widening bounds where needed so lo <= point <= hi.
    pub fn new(node: &str, model: ModelSpec, origin: Month, point: Vec<f64>, lo95: Vec<f64>, hi95: Vec<f64>) -> Result<Self> {
        let horizon = point.len();
        if lo95.len() != horizon || hi95.len() != horizon {
            return Err(Error::InvalidInput("forecast arrays differ in length".into()));
        }
        if point.iter().chain(&lo95).chain(&hi95).any(|v| !v.is_finite()) {
            return Err(Error::ModelFit(format!("{} produced a non-finite forecast for {node}", model.family)));
        }
        let lo95 = lo95.iter().zip(&point).map(|(l, p)| l.min(*p)).collect();
        let hi95 = hi95.iter().zip(&point).map(|(h, p)| h.max(*p)).collect();
        Ok(Self {
            node: node.to_string(),
            model,
            origin,
            horizon,
            point,
            lo95,
            hi95,
            flags: Vec::new(),
        })
    }

    pub fn flag(mut self, f: &str) -> Self {
        if !self.flags.iter().any(|x| x == f) {
            self.flags.push(f.to_string());
        }
        self
    }

    pub fn has_flag(&self, f: &str) -> bool {
        self.flags.iter().any(|x| x == f)
    }

    pub fn month(&self, step: usize) -> Month {
        self.origin.offset(step as i32 + 1)
    }

    /// Clamp every value at or above `floor` (e.g. 0 for counts).
    pub fn clamp_below(&mut self, floor: f64) {
        for v in self.point.iter_mut().chain(&mut self.lo95).chain(&mut self.hi95) {
            *v = v.max(floor);
        }
    }

    pub fn is_ordered(&self) -> bool {
        (0..self.horizon).all(|i| self.lo95[i] <= self.point[i] && self.point[i] <= self.hi95[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualValue {
    pub year: i32,
    pub point: f64,
    pub lo95: f64,
    pub hi95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleForecast {
    pub node: String,
    pub origin: Month,
    pub horizon: usize,
    pub members: Vec<ForecastPath>,
    pub point: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
    pub annual: Vec<AnnualValue>,
}

impl EnsembleForecast {
    pub fn annual_point(&self, year: i32) -> Option<f64> {
        self.annual.iter().find(|a| a.year == year).map(|a| a.point)
    }

    pub fn month(&self, step: usize) -> Month {
        self.origin.offset(step as i32 + 1)
    }
}

/// Calendar-year mean of monthly values (headcount is a stock). Only
/// complete years are reported.
pub fn annual_rollup(origin: Month, point: &[f64], lo95: &[f64], hi95: &[f64]) -> Vec<AnnualValue> {
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for i in 0..point.len() {
        by_year.entry(origin.offset(i as i32 + 1).year()).or_default().push(i);
    }
    by_year
        .into_iter()
        .filter(|(_, idx)| idx.len() == 12)
        .map(|(year, idx)| {
            let avg = |v: &[f64]| idx.iter().map(|&i| v[i]).sum::<f64>() / idx.len() as f64;
            AnnualValue {
                year,
                point: avg(point),
                lo95: avg(lo95),
                hi95: avg(hi95),
            }
        })
        .collect()
}

/// Simple average of member paths and bounds. Members are summed in a
/// canonical order so the result does not depend on input order.
pub fn ensemble(paths: &[ForecastPath]) -> Result<EnsembleForecast> {
    if paths.len() < 2 {
        return Err(Error::InvalidInput(format!("ensemble needs at least 2 members, got {}", paths.len())));
    }
    let first = &paths[0];
    for p in paths {
        if p.horizon != first.horizon || p.origin != first.origin {
            return Err(Error::InvalidInput(format!(
                "member {} has horizon {} from {}, expected {} from {}",
                p.model.family, p.horizon, p.origin, first.horizon, first.origin
            )));
        }
        if p.node != first.node {
            return Err(Error::InvalidInput(format!("members mix nodes {} and {}", first.node, p.node)));
        }
    }
    let mut members = paths.to_vec();
    members.sort_by(|a, b| {
        a.model
            .family
            .cmp(&b.model.family)
            .then_with(|| serde_json::to_string(&a.model).unwrap().cmp(&serde_json::to_string(&b.model).unwrap()))
            .then_with(|| cmp_vec(&a.point, &b.point))
    });
    let k = members.len() as f64;
    let h = first.horizon;
    let avg = |f: &dyn Fn(&ForecastPath) -> &Vec<f64>| -> Vec<f64> {
        (0..h).map(|i| members.iter().map(|m| f(m)[i]).sum::<f64>() / k).collect()
    };
    let point = avg(&|m| &m.point);
    let lo95 = avg(&|m| &m.lo95);
    let hi95 = avg(&|m| &m.hi95);
    let annual = annual_rollup(first.origin, &point, &lo95, &hi95);
    Ok(EnsembleForecast {
        node: first.node.clone(),
        origin: first.origin,
        horizon: h,
        members,
        point,
        lo95,
        hi95,
        annual,
    })
}

fn cmp_vec(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = x.total_cmp(y);
        if c.is_ne() {
            return c;
        }
    }
    a.len().cmp(&b.len())
}
