use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{AnnualFlow, DemandTable, FlowEstimates, SimulationResult};
use super::params::{presets, PolicyScenario, RegionParams, FIRST_YEAR, LAST_YEAR};
use super::sweep::{NationalYear, Objective};
use crate::error::{Error, Result};

fn default_first() -> i32 {
    FIRST_YEAR
}
fn default_last() -> i32 {
    LAST_YEAR
}

/// Simulation configuration. Relative file references resolve against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockflowConfig {
    pub regions: Vec<RegionParams>,
    #[serde(default = "presets")]
    pub scenarios: Vec<PolicyScenario>,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub flows: Option<PathBuf>,
    #[serde(default)]
    pub demand: Option<PathBuf>,
    #[serde(default = "default_first")]
    pub first_year: i32,
    #[serde(default = "default_last")]
    pub last_year: i32,
    /// Free-form provenance notes, carried through untouched.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl StockflowConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: StockflowConfig = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.flows, &mut cfg.demand].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions.is_empty() {
            return Err(Error::InvalidInput("config lists no regions".into()));
        }
        for r in &self.regions {
            r.validate()?;
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        if self.first_year > self.last_year {
            return Err(Error::InvalidInput(format!("first_year {} after last_year {}", self.first_year, self.last_year)));
        }
        Ok(())
    }

    pub fn years(&self) -> std::ops::RangeInclusive<i32> {
        self.first_year..=self.last_year
    }

    pub fn region_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.regions.iter().map(|r| r.id.clone()).collect();
        ids.sort();
        ids
    }
}

#[derive(Serialize, Deserialize)]
struct FlowRow {
    region: String,
    year: i32,
    all_joiners: f64,
    leavers: f64,
}

#[derive(Serialize, Deserialize)]
struct DemandRow {
    region: String,
    year: i32,
    demand: f64,
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

pub fn read_flows<R: Read>(reader: R, origin: &Path) -> Result<FlowEstimates> {
    let mut out = FlowEstimates::default();
    for row in csv::Reader::from_reader(reader).deserialize::<FlowRow>() {
        let row = row.map_err(|e| Error::parse(origin, e))?;
        if out.get(&row.region, row.year).is_some() {
            return Err(Error::parse(origin, format!("duplicate row for {} {}", row.region, row.year)));
        }
        out.insert(row.region, row.year, AnnualFlow { all_joiners: row.all_joiners, leavers: row.leavers });
    }
    Ok(out)
}

pub fn read_flows_csv(path: &Path) -> Result<FlowEstimates> {
    read_flows(open(path)?, path)
}

pub fn write_flows<W: Write>(flows: &FlowEstimates, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (region, years) in &flows.regions {
        for (&year, f) in years {
            w.serialize(FlowRow {
                region: region.clone(),
                year,
                all_joiners: f.all_joiners,
                leavers: f.leavers,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io("<flows csv>", e))?;
    Ok(())
}

pub fn read_demand<R: Read>(reader: R, origin: &Path) -> Result<DemandTable> {
    let mut out = DemandTable::default();
    for row in csv::Reader::from_reader(reader).deserialize::<DemandRow>() {
        let row = row.map_err(|e| Error::parse(origin, e))?;
        if out.get(&row.region, row.year).is_some() {
            return Err(Error::parse(origin, format!("duplicate row for {} {}", row.region, row.year)));
        }
        out.insert(row.region, row.year, row.demand);
    }
    Ok(out)
}

pub fn read_demand_csv(path: &Path) -> Result<DemandTable> {
    read_demand(open(path)?, path)
}

pub fn write_demand<W: Write>(demand: &DemandTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (region, years) in &demand.regions {
        for (&year, &d) in years {
            w.serialize(DemandRow { region: region.clone(), year, demand: d })?;
        }
    }
    w.flush().map_err(|e| Error::io("<demand csv>", e))?;
    Ok(())
}

#[derive(Serialize)]
struct ResultRow<'a> {
    region: &'a str,
    scenario: u32,
    year: i32,
    supply: f64,
    demand: f64,
    gap: f64,
    graduate_joiners: f64,
    international_joiners: f64,
    other_recruitments: f64,
    total_joiners: f64,
    leavers: f64,
}

/// Rounds to 1e-6 so trajectories that should be whole numbers print as such.
fn tidy(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn write_results<W: Write>(rows: &[SimulationResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(ResultRow {
            region: &r.region,
            scenario: r.scenario,
            year: r.year,
            supply: tidy(r.supply),
            demand: tidy(r.demand),
            gap: tidy(r.gap),
            graduate_joiners: tidy(r.graduate_joiners),
            international_joiners: tidy(r.international_joiners),
            other_recruitments: tidy(r.other_recruitments),
            total_joiners: tidy(r.total_joiners),
            leavers: tidy(r.leavers),
        })?;
    }
    w.flush().map_err(|e| Error::io("<results csv>", e))?;
    Ok(())
}

#[derive(Serialize)]
struct NationalRow<'a> {
    policy: &'a str,
    year: i32,
    supply: f64,
    demand: f64,
    gap: f64,
}

/// National rollups, one block per labelled policy.
pub fn write_national<W: Write>(blocks: &[(&str, &[NationalYear])], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (policy, years) in blocks {
        for n in *years {
            w.serialize(NationalRow {
                policy,
                year: n.year,
                supply: tidy(n.supply),
                demand: tidy(n.demand),
                gap: tidy(n.gap),
            })?;
        }
    }
    w.flush().map_err(|e| Error::io("<national csv>", e))?;
    Ok(())
}
