use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bottom_up::{bottom_up, NodeForecast};
use super::engine::{ensemble_members, global_members, DroppedMember, EngineConfig};
use super::global::{extend_panel, GlobalModel};
use super::path::{EnsembleForecast, ForecastPath};
use super::predictors::{DemandScenario, PredictorForecasts};
use crate::error::{Error, Result};
use crate::panel::{GeoHierarchy, PanelDataset, VariableId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioForecast {
    pub scenario: DemandScenario,
    pub icbs: BTreeMap<String, EnsembleForecast>,
    /// Every level after bottom-up aggregation, keyed by node id.
    pub nodes: BTreeMap<String, NodeForecast>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub dropped: BTreeMap<String, Vec<DroppedMember>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandScenarioSet {
    pub scenarios: BTreeMap<DemandScenario, ScenarioForecast>,
}

impl DemandScenarioSet {
    pub fn get(&self, s: DemandScenario) -> Option<&ScenarioForecast> {
        self.scenarios.get(&s)
    }
}

/// Re-runs the global models under BASE / HIGH / LOW patient-demand inputs
/// and re-ensembles each ICB with its unchanged univariate members, then
/// aggregates bottom-up.
pub fn build_demand_scenarios(
    history: &PanelDataset,
    hierarchy: &GeoHierarchy,
    predictors: &PredictorForecasts,
    globals: &[GlobalModel],
    univariate: &BTreeMap<String, (Vec<ForecastPath>, Vec<DroppedMember>)>,
    target: VariableId,
    cfg: &EngineConfig,
) -> Result<DemandScenarioSet> {
    for (node, _) in univariate {
        for v in VariableId::PATIENT {
            if history.get(node, v).is_some() && predictors.get(node, v).is_none() {
                return Err(Error::MissingCells(format!("no forecast bounds for {v} at {node}")));
            }
        }
    }
    let origin = history.span().end();
    let mut scenarios = BTreeMap::new();
    for s in DemandScenario::ALL {
        let extended = extend_panel(history, &predictors.scenario_panel(s)?)?;
        let per_node: Vec<(String, Result<EnsembleForecast>, Vec<DroppedMember>)> = univariate
            .par_iter()
            .map(|(node, (uni, uni_dropped))| {
                let (mut paths, mut dropped) = global_members(node, &extended, hierarchy, globals, origin, cfg);
                if target.is_count() {
                    paths.iter_mut().for_each(|p| p.clamp_below(0.0));
                }
                let mut all = uni.clone();
                all.extend(paths);
                dropped.extend(uni_dropped.iter().cloned());
                let e = ensemble_members(node, &all, &dropped);
                (node.clone(), e, dropped)
            })
            .collect();
        let mut icbs = BTreeMap::new();
        let mut dropped = BTreeMap::new();
        for (node, e, d) in per_node {
            icbs.insert(node.clone(), e?);
            if !d.is_empty() {
                dropped.insert(node, d);
            }
        }
        let nodes = bottom_up(&icbs, hierarchy)?;
        scenarios.insert(
            s,
            ScenarioForecast {
                scenario: s,
                icbs,
                nodes,
                dropped,
            },
        );
    }
    Ok(DemandScenarioSet { scenarios })
}
