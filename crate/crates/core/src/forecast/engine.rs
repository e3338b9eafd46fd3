use serde::{Deserialize, Serialize};

use super::arima::auto_arima;
use super::ets::auto_ets;
use super::global::GlobalModel;
use super::path::{ensemble, EnsembleForecast, ForecastPath, ModelFamily};
use super::snaive::snaive_forecast;
use crate::calendar::Month;
use crate::error::{Error, Result};
use crate::panel::{GeoHierarchy, PanelDataset, VariableId};
use crate::stats::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub horizon: usize,
    pub season: usize,
    /// Simulated sample paths per univariate interval.
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            horizon: 72,
            season: 12,
            n_paths: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedMember {
    pub family: ModelFamily,
    pub reason: String,
}

/// sNAIVE, ETS and ARIMA paths for one series. Families that fail are
/// reported rather than aborting the node.
pub fn univariate_members(node: &str, origin: Month, y: &[f64], cfg: &EngineConfig) -> (Vec<ForecastPath>, Vec<DroppedMember>) {
    let mut paths = Vec::new();
    let mut dropped = Vec::new();
    let mut keep = |family, r: Result<ForecastPath>| match r {
        Ok(p) => paths.push(p),
        Err(e) => {
            tracing::warn!(node, %family, error = %e, "dropping ensemble member");
            dropped.push(DroppedMember {
                family,
                reason: e.to_string(),
            })
        }
    };
    keep(ModelFamily::Snaive, snaive_forecast(node, origin, y, cfg.horizon, cfg.season));
    let ets = (|| {
        let (fit, _) = auto_ets(node, origin, y, 0, cfg.season, 0)?;
        fit.forecast(node, origin, cfg.horizon, cfg.n_paths, derive_seed(cfg.seed, &format!("ets/{node}")))
    })();
    keep(ModelFamily::Ets, ets);
    let arima = (|| {
        let (fit, _) = auto_arima(node, origin, y, 0, 0)?;
        fit.forecast(node, origin, cfg.horizon, cfg.n_paths, derive_seed(cfg.seed, &format!("arima/{node}")))
    })();
    keep(ModelFamily::Arima, arima);
    (paths, dropped)
}

/// Global-model paths for one node given an extended (history + future
/// exogenous) panel.
pub fn global_members(
    node: &str,
    extended: &PanelDataset,
    hierarchy: &GeoHierarchy,
    globals: &[GlobalModel],
    origin: Month,
    cfg: &EngineConfig,
) -> (Vec<ForecastPath>, Vec<DroppedMember>) {
    let mut paths = Vec::new();
    let mut dropped = Vec::new();
    for g in globals {
        match g.forecast(extended, hierarchy, node, origin, cfg.horizon) {
            Ok(p) => paths.push(p),
            Err(e) => {
                tracing::warn!(node, family = %g.family, error = %e, "dropping ensemble member");
                dropped.push(DroppedMember {
                    family: g.family,
                    reason: e.to_string(),
                });
            }
        }
    }
    (paths, dropped)
}

/// Every family for one node: three univariate fits on its own history and
/// the global models run recursively against `extended`.
pub fn forecast_node(
    node: &str,
    target: VariableId,
    extended: &PanelDataset,
    hierarchy: &GeoHierarchy,
    globals: &[GlobalModel],
    origin: Month,
    cfg: &EngineConfig,
) -> Result<(Vec<ForecastPath>, Vec<DroppedMember>)> {
    let series = extended.require(node, target)?;
    let pos = extended
        .span()
        .position(origin)
        .ok_or_else(|| Error::InvalidInput(format!("origin {origin} outside panel")))?;
    let (mut paths, mut dropped) = univariate_members(node, origin, &series[..=pos], cfg);
    let (g, gd) = global_members(node, extended, hierarchy, globals, origin, cfg);
    paths.extend(g);
    dropped.extend(gd);
    if target.is_count() {
        paths.iter_mut().for_each(|p| p.clamp_below(0.0));
    }
    Ok((paths, dropped))
}

/// Ensemble of the surviving members; at least two are required.
pub fn ensemble_members(node: &str, paths: &[ForecastPath], dropped: &[DroppedMember]) -> Result<EnsembleForecast> {
    if paths.len() < 2 {
        let reasons: Vec<String> = dropped.iter().map(|d| format!("{}: {}", d.family, d.reason)).collect();
        return Err(Error::ModelFit(format!(
            "only {} ensemble member(s) survived for {node}: {}",
            paths.len(),
            reasons.join("; ")
        )));
    }
    ensemble(paths)
}
