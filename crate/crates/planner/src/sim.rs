//! The one simulation path shared by the CLI and the HTTP API.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use planner_core::pipeline::rescale_regions;
use planner_core::stockflow::{
    national_rollup, preset_for, read_demand, read_flows, read_flows_csv, read_demand_csv, run_scenarios, simulate,
    summarize, DemandTable, FlowEstimates, NationalYear, PolicyScenario, SimulationResult, StockflowConfig,
    SweepSummary,
};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::store::{digest_bytes, RunRecord, RunStore};

/// Scenario id given to lever pairs that match no preset.
pub const CUSTOM_SCENARIO_ID: u32 = 8;

pub const CONFIG_FILE: &str = "config.json";
pub const FLOWS_FILE: &str = "flows.csv";
pub const DEMAND_FILE: &str = "demand.csv";

/// Parameters, flows and demand for one simulation, fully loaded.
#[derive(Debug, Clone)]
pub struct SimInputs {
    pub config: StockflowConfig,
    pub flows: FlowEstimates,
    pub demand: DemandTable,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| AppError::io(path, e))
}

impl SimInputs {
    /// Loads a config plus its flow and demand tables. Explicit paths
    /// override the ones named in the config. `stock` rescales every region
    /// to a new starting headcount.
    pub fn load(
        config: &Path,
        flows: Option<&Path>,
        demand: Option<&Path>,
        stock: Option<&BTreeMap<String, f64>>,
    ) -> Result<Self> {
        let mut cfg = StockflowConfig::load(config)?;
        let flows_path = flows
            .map(Path::to_path_buf)
            .or_else(|| cfg.flows.clone())
            .ok_or_else(|| AppError::invalid("flows", "no flow table given and none named in the config"))?;
        let demand_path = demand
            .map(Path::to_path_buf)
            .or_else(|| cfg.demand.clone())
            .ok_or_else(|| AppError::invalid("demand", "no demand table given and none named in the config"))?;
        let flows = read_flows_csv(&flows_path)?;
        let demand = read_demand_csv(&demand_path)?;
        if let Some(stock) = stock {
            cfg.regions = rescale_regions(&cfg.regions, stock)?;
        }
        cfg.flows = None;
        cfg.demand = None;
        Ok(Self {
            config: cfg,
            flows,
            demand,
        })
    }

    /// Inputs snapshotted by a finished sweep run.
    pub fn from_run(store: &RunStore, rec: &RunRecord) -> Result<Self> {
        let cfg_bytes = store.read_artifact(rec, CONFIG_FILE)?;
        let mut config: StockflowConfig = serde_json::from_slice(&cfg_bytes)?;
        config.flows = None;
        config.demand = None;
        config.validate()?;
        let dir = store.run_dir(&rec.id);
        let flows = read_flows(&store.read_artifact(rec, FLOWS_FILE)?[..], &dir.join(FLOWS_FILE))?;
        let demand = read_demand(&store.read_artifact(rec, DEMAND_FILE)?[..], &dir.join(DEMAND_FILE))?;
        Ok(Self { config, flows, demand })
    }

    /// Config as stored in a run: flows and demand point at the sibling
    /// snapshot files so the directory can be simulated again on its own.
    pub fn snapshot_config(&self) -> StockflowConfig {
        StockflowConfig {
            flows: Some(PathBuf::from(FLOWS_FILE)),
            demand: Some(PathBuf::from(DEMAND_FILE)),
            ..self.config.clone()
        }
    }

    pub fn flows_csv(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        planner_core::stockflow::write_flows(&self.flows, &mut out)?;
        Ok(out)
    }

    pub fn demand_csv(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        planner_core::stockflow::write_demand(&self.demand, &mut out)?;
        Ok(out)
    }

    /// Digests of the canonical flow and demand tables, so the same numbers
    /// hash the same whatever file they came from.
    pub fn input_digests(&self) -> Result<BTreeMap<String, String>> {
        Ok(BTreeMap::from([
            ("flows".to_string(), digest_bytes(&self.flows_csv()?)),
            ("demand".to_string(), digest_bytes(&self.demand_csv()?)),
        ]))
    }

    pub fn region_ids(&self) -> Vec<String> {
        self.config.region_ids()
    }
}

pub fn load_stock(path: &Path) -> Result<BTreeMap<String, f64>> {
    Ok(serde_json::from_slice(&read(path)?)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutput {
    pub rows: Vec<SimulationResult>,
    pub summary: SweepSummary,
}

pub fn sweep(inputs: &SimInputs) -> Result<SweepOutput> {
    let cfg = &inputs.config;
    let rows = run_scenarios(&cfg.regions, &inputs.flows, &inputs.demand, &cfg.scenarios, cfg.years())?;
    let summary = summarize(&rows, &inputs.region_ids(), cfg.objective)?;
    Ok(SweepOutput { rows, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Levers {
    pub recruitment_uplift: f64,
    pub ucas_growth_uplift: f64,
}

impl Levers {
    pub const BOUNDS: (f64, f64) = (0.0, 1.0);

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = Self::BOUNDS;
        for (field, v) in [
            ("recruitment_uplift", self.recruitment_uplift),
            ("ucas_growth_uplift", self.ucas_growth_uplift),
        ] {
            if !(v.is_finite() && (lo..=hi).contains(&v)) {
                return Err(AppError::invalid(field, format!("{field} = {v} is outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// The matching preset, or a custom scenario.
    pub fn scenario(&self) -> PolicyScenario {
        preset_for(self.recruitment_uplift, self.ucas_growth_uplift).unwrap_or(PolicyScenario {
            id: CUSTOM_SCENARIO_ID,
            recruitment_uplift: self.recruitment_uplift,
            ucas_growth_uplift: self.ucas_growth_uplift,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverRun {
    pub scenario: PolicyScenario,
    /// Preset id when the levers sit exactly on a preset.
    pub preset: Option<u32>,
    pub regions: Vec<String>,
    pub rows: Vec<SimulationResult>,
    pub national: Vec<NationalYear>,
}

/// One scenario over all regions, or the listed subset.
pub fn simulate_levers(inputs: &SimInputs, levers: Levers, regions: Option<&[String]>) -> Result<LeverRun> {
    levers.validate()?;
    let scenario = levers.scenario();
    let known = inputs.region_ids();
    let ids: Vec<String> = match regions {
        None => known.clone(),
        Some(list) => {
            if list.is_empty() {
                return Err(AppError::invalid("regions", "region filter is empty"));
            }
            let mut ids = list.to_vec();
            ids.sort();
            ids.dedup();
            if let Some(bad) = ids.iter().find(|r| !known.contains(r)) {
                return Err(AppError::invalid("regions", format!("unknown region `{bad}`")));
            }
            ids
        }
    };
    let cfg = &inputs.config;
    let params: Vec<_> = cfg.regions.iter().filter(|r| ids.contains(&r.id)).cloned().collect();
    let rows = simulate(&params, &inputs.flows, &inputs.demand, &scenario, cfg.years())?;
    let national = national_rollup(&rows, &ids)?;
    Ok(LeverRun {
        preset: (scenario.id != CUSTOM_SCENARIO_ID).then_some(scenario.id),
        scenario,
        regions: ids,
        rows,
        national,
    })
}
