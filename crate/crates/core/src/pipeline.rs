//! Stage orchestration shared by the CLI and the HTTP service.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{Month, MonthSpan};
use crate::error::{Error, Result};
use crate::features::{lasso_fit, select_top_k, standardize, FeatureMatrix, FeatureSpec, LassoResult, TopK};
use crate::forecast::{
    build_demand_scenarios, default_grid, fit_global, forecast_predictors, univariate_members, DemandScenario,
    DemandScenarioSet, DroppedMember, EngineConfig, ForecastPath, GbdtParams, GlobalConfig, GlobalModel,
    PredictorForecasts, TargetTransform,
};
use crate::panel::{aggregate_hierarchy, GeoHierarchy, GeoLevel, PanelDataset, VariableId};
use crate::stockflow::{AnnualFlow, DemandTable, FlowEstimates, RegionParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub target: VariableId,
    pub alpha: f64,
    pub top_k: usize,
    pub lags: Vec<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            target: VariableId::Headcount,
            alpha: 0.1,
            top_k: 30,
            lags: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub target: VariableId,
    pub pool: Vec<FeatureSpec>,
    pub rows: usize,
    /// Pool columns dropped for having no variance.
    pub dropped: Vec<String>,
    pub lasso: LassoResult,
    pub top: TopK,
    pub selected: Vec<FeatureSpec>,
}

/// Levels of every predictor plus lags of those that carry lag predictors,
/// and the month of year.
pub fn candidate_pool(panel: &PanelDataset, target: VariableId, lags: &[usize]) -> Vec<FeatureSpec> {
    let mut pool = vec![FeatureSpec::MonthOfYear];
    for v in panel.variables() {
        if v == target {
            continue;
        }
        pool.push(FeatureSpec::Level(v));
        if v.has_lag_predictor() {
            pool.extend(lags.iter().map(|&k| FeatureSpec::Lag(v, k)));
        }
    }
    pool
}

fn icb_nodes<'a>(panel: &PanelDataset, hierarchy: &'a GeoHierarchy, v: VariableId) -> Vec<&'a str> {
    hierarchy
        .icbs()
        .into_iter()
        .filter(|n| panel.get(&n.id, v).is_some())
        .map(|n| n.id.as_str())
        .collect()
}

/// Pools all ICB rows, standardizes, fits the lasso and keeps the top-k
/// features by absolute coefficient.
pub fn select_features(panel: &PanelDataset, hierarchy: &GeoHierarchy, cfg: &FeatureConfig) -> Result<FeatureReport> {
    let nodes = icb_nodes(panel, hierarchy, cfg.target);
    if nodes.is_empty() {
        return Err(Error::MissingCells(format!("no ICB carries {}", cfg.target)));
    }
    let pool = candidate_pool(panel, cfg.target, &cfg.lags);
    let m = FeatureMatrix::build(panel, hierarchy, &nodes, &pool, Some(cfg.target))?;
    let (z, st) = standardize(&m)?;
    let lasso = lasso_fit(&z, cfg.alpha)?;
    let top = select_top_k(&lasso, cfg.top_k);
    let selected = top.features.iter().map(|f| f.parse()).collect::<Result<Vec<FeatureSpec>>>()?;
    Ok(FeatureReport {
        target: cfg.target,
        pool,
        rows: m.n_rows(),
        dropped: st.dropped.clone(),
        lasso,
        top,
        selected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    pub target: VariableId,
    pub engine: EngineConfig,
    pub grid: Vec<GbdtParams>,
    pub predictor_params: GbdtParams,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            target: VariableId::Headcount,
            engine: EngineConfig::default(),
            grid: default_grid(),
            predictor_params: GbdtParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSummary {
    pub family: String,
    pub features: Vec<String>,
    pub standardized: bool,
    pub interval_half_width: f64,
    pub tuned: Option<GbdtParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRun {
    pub origin: Month,
    pub horizon: usize,
    pub target: VariableId,
    pub globals: Vec<GlobalSummary>,
    pub predictors: PredictorForecasts,
    pub scenarios: DemandScenarioSet,
}

fn with_extras(base: &[FeatureSpec], extras: &[FeatureSpec]) -> Vec<FeatureSpec> {
    let mut out = base.to_vec();
    for e in extras {
        if !out.contains(e) {
            out.push(e.clone());
        }
    }
    out
}

/// Predictors needed downstream: everything the features read, the patient
/// demand series that define the scenarios, and the flows the supply model
/// consumes.
pub fn predictor_variables(panel: &PanelDataset, features: &[FeatureSpec], target: VariableId) -> Vec<VariableId> {
    let mut vars: BTreeSet<VariableId> = features.iter().filter_map(|f| f.variable()).filter(|v| *v != target).collect();
    vars.extend(VariableId::PATIENT);
    vars.extend([VariableId::Joiners, VariableId::Leavers]);
    let present = panel.variables();
    vars.into_iter().filter(|v| present.contains(v)).collect()
}

/// Fits everything and produces BASE/HIGH/LOW ensembles at every level.
pub fn run_forecast(
    panel: &PanelDataset,
    hierarchy: &GeoHierarchy,
    projection: Option<&PanelDataset>,
    features: &[FeatureSpec],
    cfg: &ForecastConfig,
) -> Result<ForecastRun> {
    let target = cfg.target;
    let origin = panel.span().end();
    let h = cfg.engine.horizon;
    let nodes = icb_nodes(panel, hierarchy, target);
    if nodes.is_empty() {
        return Err(Error::MissingCells(format!("no ICB carries {target}")));
    }
    let vars = predictor_variables(panel, features, target);
    let predictors = forecast_predictors(panel, &vars, h, projection, cfg.predictor_params)?;

    let lin_specs = with_extras(features, &[FeatureSpec::MonthOfYear]);
    let tree_specs = with_extras(features, &[FeatureSpec::MonthOfYear, FeatureSpec::IcbCode]);
    let (lin, gbdt) = rayon::join(
        || fit_global(panel, hierarchy, &nodes, &lin_specs, target, TargetTransform::Level, &GlobalConfig::Linreg),
        || {
            fit_global(
                panel,
                hierarchy,
                &nodes,
                &tree_specs,
                target,
                TargetTransform::Diff,
                &GlobalConfig::Gbdt { grid: cfg.grid.clone() },
            )
        },
    );
    let globals: Vec<GlobalModel> = vec![lin?, gbdt?];

    let univariate: BTreeMap<String, (Vec<ForecastPath>, Vec<DroppedMember>)> = nodes
        .par_iter()
        .map(|&n| {
            let y = panel.require(n, target)?;
            Ok((n.to_string(), univariate_members(n, origin, y, &cfg.engine)))
        })
        .collect::<Result<_>>()?;
    let scenarios = build_demand_scenarios(panel, hierarchy, &predictors, &globals, &univariate, target, &cfg.engine)?;

    let summaries = globals
        .iter()
        .map(|g| GlobalSummary {
            family: g.family.code().to_string(),
            features: g.specs.iter().map(|s| s.to_string()).collect(),
            standardized: g.standardizer.is_some(),
            interval_half_width: g.width.width,
            tuned: g.grid.as_ref().map(|r| r.best),
        })
        .collect();
    Ok(ForecastRun {
        origin,
        horizon: h,
        target,
        globals: summaries,
        predictors,
        scenarios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub holdout_months: usize,
    pub series: usize,
    pub points: usize,
    pub covered: usize,
    pub coverage: f64,
    pub per_series: BTreeMap<String, f64>,
}

/// Refits on all but the last `holdout` months and counts how many held-out
/// ICB observations fall inside the BASE ensemble's 95% interval. Population
/// inputs over the holdout are taken as known.
pub fn holdout_coverage(
    panel: &PanelDataset,
    hierarchy: &GeoHierarchy,
    features: &[FeatureSpec],
    cfg: &ForecastConfig,
    holdout: usize,
) -> Result<CoverageReport> {
    let span = panel.span();
    if holdout == 0 || span.len <= holdout + 26 {
        return Err(Error::SeriesTooShort {
            needed: holdout + 27,
            got: span.len,
        });
    }
    let cut = span.month(span.len - holdout - 1);
    let train = panel.truncate(cut)?;
    let mut projection = PanelDataset::new(MonthSpan::new(cut.next(), holdout));
    for (key, values) in panel.series() {
        if key.variable.is_population() {
            projection.insert(key.node.clone(), key.variable, values[span.len - holdout..].to_vec())?;
        }
    }
    let mut c = cfg.clone();
    c.engine.horizon = holdout;
    let run = run_forecast(&train, hierarchy, Some(&projection), features, &c)?;
    let base = run
        .scenarios
        .get(DemandScenario::Base)
        .ok_or_else(|| Error::InvalidInput("no BASE scenario".into()))?;
    let mut per_series = BTreeMap::new();
    let (mut points, mut covered) = (0, 0);
    for (node, e) in &base.icbs {
        let actual = &panel.require(node, cfg.target)?[span.len - holdout..];
        let hit = (0..holdout).filter(|&i| e.lo95[i] <= actual[i] && actual[i] <= e.hi95[i]).count();
        per_series.insert(node.clone(), hit as f64 / holdout as f64);
        points += holdout;
        covered += hit;
    }
    Ok(CoverageReport {
        holdout_months: holdout,
        series: per_series.len(),
        points,
        covered,
        coverage: if points == 0 { 0.0 } else { covered as f64 / points as f64 },
        per_series,
    })
}

fn full_years(span: MonthSpan) -> Vec<i32> {
    let mut years: Vec<i32> = span.months().map(|m| m.year()).collect();
    years.dedup();
    years
        .into_iter()
        .filter(|&y| span.contains(Month::from_ym(y, 1)) && span.contains(Month::from_ym(y, 12)))
        .collect()
}

/// Annual joiners and leavers per region: BASE predictor forecasts summed
/// over each region's ICBs and each complete calendar year.
pub fn annual_flows(predictors: &PredictorForecasts, hierarchy: &GeoHierarchy) -> Result<FlowEstimates> {
    let span = predictors.span();
    let years = full_years(span);
    let mut out = FlowEstimates::default();
    for region in hierarchy.regions() {
        for &year in &years {
            let mut joiners = 0.0;
            let mut leavers = 0.0;
            let mut kids: Vec<&String> = hierarchy.children(&region.id).iter().collect();
            kids.sort();
            for icb in kids {
                for (v, acc) in [(VariableId::Joiners, &mut joiners), (VariableId::Leavers, &mut leavers)] {
                    let p = predictors
                        .get(icb, v)
                        .ok_or_else(|| Error::MissingCells(format!("no {v} forecast for {icb}")))?;
                    *acc += (0..span.len).filter(|&i| span.month(i).year() == year).map(|i| p.point[i]).sum::<f64>();
                }
            }
            out.insert(region.id.clone(), year, AnnualFlow { all_joiners: joiners, leavers });
        }
    }
    Ok(out)
}

/// Regional annual demand for one scenario.
pub fn annual_demand(set: &DemandScenarioSet, scenario: DemandScenario, hierarchy: &GeoHierarchy) -> Result<DemandTable> {
    let s = set
        .get(scenario)
        .ok_or_else(|| Error::InvalidInput(format!("scenario {scenario} not forecast")))?;
    let mut out = DemandTable::default();
    for region in hierarchy.regions() {
        let f = s.nodes.get(&region.id).ok_or_else(|| Error::MissingRegion(region.id.clone()))?;
        for a in &f.annual {
            out.insert(region.id.clone(), a.year, a.point);
        }
    }
    Ok(out)
}

/// Regional headcount in the final observed month.
pub fn final_regional_stock(panel: &PanelDataset, hierarchy: &GeoHierarchy, target: VariableId) -> Result<BTreeMap<String, f64>> {
    let agg = aggregate_hierarchy(panel, hierarchy, target)?;
    Ok(hierarchy
        .at_level(GeoLevel::Region)
        .filter_map(|r| agg.get(&r.id).and_then(|s| s.last()).map(|v| (r.id.clone(), *v)))
        .collect())
}

/// Rebases each region on an observed stock, scaling the intake count by
/// the same factor so intake-per-head is preserved. Rates are untouched.
pub fn rescale_regions(params: &[RegionParams], stock: &BTreeMap<String, f64>) -> Result<Vec<RegionParams>> {
    params
        .iter()
        .map(|p| {
            let s = *stock.get(&p.id).ok_or_else(|| Error::MissingRegion(p.id.clone()))?;
            if !(p.initial_headcount > 0.0) {
                return Err(Error::InvalidValue(format!("region {}: cannot rescale from zero headcount", p.id)));
            }
            let f = s / p.initial_headcount;
            let mut q = p.clone();
            q.initial_headcount = s;
            q.ucas_initial = p.ucas_initial * f;
            Ok(q)
        })
        .collect()
}
