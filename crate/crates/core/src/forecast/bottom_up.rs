use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::path::{AnnualValue, EnsembleForecast};
use crate::calendar::Month;
use crate::error::{Error, Result};
use crate::panel::{GeoHierarchy, GeoLevel};

/// Point and bounds for one node at any level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeForecast {
    pub node: String,
    pub level: GeoLevel,
    pub origin: Month,
    pub horizon: usize,
    pub point: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
    pub annual: Vec<AnnualValue>,
}

impl NodeForecast {
    pub fn from_ensemble(e: &EnsembleForecast, level: GeoLevel) -> Self {
        Self {
            node: e.node.clone(),
            level,
            origin: e.origin,
            horizon: e.horizon,
            point: e.point.clone(),
            lo95: e.lo95.clone(),
            hi95: e.hi95.clone(),
            annual: e.annual.clone(),
        }
    }

    pub fn annual_point(&self, year: i32) -> Option<f64> {
        self.annual.iter().find(|a| a.year == year).map(|a| a.point)
    }
}

/// Exact sum of child forecasts, in sorted-id order so the result does not
/// depend on how children are listed.
pub fn sum_forecasts(node: &str, level: GeoLevel, children: &[&NodeForecast]) -> Result<NodeForecast> {
    let mut kids = children.to_vec();
    kids.sort_by(|a, b| a.node.cmp(&b.node));
    let first = kids
        .first()
        .ok_or_else(|| Error::InvalidInput(format!("{node} has no children to aggregate")))?;
    for k in &kids {
        if k.horizon != first.horizon || k.origin != first.origin || k.annual.len() != first.annual.len() {
            return Err(Error::SpanMismatch(format!(
                "{} and {} forecast different horizons",
                first.node, k.node
            )));
        }
    }
    let h = first.horizon;
    let sum = |f: &dyn Fn(&NodeForecast) -> &Vec<f64>| -> Vec<f64> {
        (0..h).map(|i| kids.iter().map(|k| f(k)[i]).sum()).collect()
    };
    let annual = (0..first.annual.len())
        .map(|j| AnnualValue {
            year: first.annual[j].year,
            point: kids.iter().map(|k| k.annual[j].point).sum(),
            lo95: kids.iter().map(|k| k.annual[j].lo95).sum(),
            hi95: kids.iter().map(|k| k.annual[j].hi95).sum(),
        })
        .collect();
    Ok(NodeForecast {
        node: node.to_string(),
        level,
        origin: first.origin,
        horizon: h,
        point: sum(&|k| &k.point),
        lo95: sum(&|k| &k.lo95),
        hi95: sum(&|k| &k.hi95),
        annual,
    })
}

/// Region forecasts as sums of their ICBs and the national forecast as the
/// sum of regions. Returns every level, ICBs included.
pub fn bottom_up(icbs: &BTreeMap<String, EnsembleForecast>, hierarchy: &GeoHierarchy) -> Result<BTreeMap<String, NodeForecast>> {
    let mut out: BTreeMap<String, NodeForecast> = icbs
        .iter()
        .map(|(id, e)| (id.clone(), NodeForecast::from_ensemble(e, GeoLevel::Icb)))
        .collect();
    let mut regions = Vec::new();
    for region in hierarchy.regions() {
        let mut kids = Vec::new();
        for child in hierarchy.children(&region.id) {
            kids.push(out.get(child).ok_or_else(|| Error::MissingChild(child.clone()))?);
        }
        regions.push(sum_forecasts(&region.id, GeoLevel::Region, &kids)?);
    }
    let national = hierarchy.national();
    let refs: Vec<&NodeForecast> = regions.iter().collect();
    let total = sum_forecasts(&national.id, GeoLevel::National, &refs)?;
    for r in regions {
        out.insert(r.node.clone(), r);
    }
    out.insert(total.node.clone(), total);
    Ok(out)
}
