use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::params::{PolicyScenario, RegionParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnualFlow {
    pub all_joiners: f64,
    pub leavers: f64,
}

/// All-joiner and leaver estimates per region and calendar year.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowEstimates {
    pub regions: BTreeMap<String, BTreeMap<i32, AnnualFlow>>,
}

impl FlowEstimates {
    pub fn insert(&mut self, region: impl Into<String>, year: i32, flow: AnnualFlow) {
        self.regions.entry(region.into()).or_default().insert(year, flow);
    }

    pub fn get(&self, region: &str, year: i32) -> Option<AnnualFlow> {
        self.regions.get(region)?.get(&year).copied()
    }
}

/// Annual demand per region and calendar year.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandTable {
    pub regions: BTreeMap<String, BTreeMap<i32, f64>>,
}

impl DemandTable {
    pub fn insert(&mut self, region: impl Into<String>, year: i32, value: f64) {
        self.regions.entry(region.into()).or_default().insert(year, value);
    }

    pub fn get(&self, region: &str, year: i32) -> Option<f64> {
        self.regions.get(region)?.get(&year).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub region: String,
    pub scenario: u32,
    pub year: i32,
    pub supply: f64,
    pub demand: f64,
    pub gap: f64,
    pub graduate_joiners: f64,
    pub international_joiners: f64,
    /// Other recruitments before the recruitment-rate lever is applied.
    pub other_recruitments: f64,
    pub total_joiners: f64,
    pub leavers: f64,
    /// Other recruitments were negative before clamping.
    #[serde(default)]
    pub other_clamped: bool,
    /// Supply would have gone negative before clamping.
    #[serde(default)]
    pub stock_clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub supply: f64,
    pub clamped: bool,
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!("{name} must be finite and non-negative, got {v}")))
    }
}

/// One annual stock update, clamped at zero.
pub fn step_supply(stock: f64, joiners: f64, leavers: f64) -> Result<StepOutcome> {
    non_negative("stock", stock)?;
    non_negative("total joiners", joiners)?;
    non_negative("leavers", leavers)?;
    let next = stock + joiners - leavers;
    if next < 0.0 {
        tracing::warn!(stock, joiners, leavers, "supply clamped at zero");
        return Ok(StepOutcome { supply: 0.0, clamped: true });
    }
    Ok(StepOutcome { supply: next, clamped: false })
}

/// Graduates joining in `year`: the intake `course_years` earlier, grown at
/// the (uplifted) annual rate from the base intake, times the joining rate.
pub fn graduate_joiners(p: &RegionParams, year: i32, growth_uplift: f64) -> Result<f64> {
    let cohort = year - p.course_years as i32;
    if cohort < p.intake_year {
        return Err(Error::InvalidInput(format!(
            "region {}: graduates in {year} come from the {cohort} intake, before the first known intake {}",
            p.id, p.intake_year
        )));
    }
    let growth = p.ucas_growth * (1.0 + growth_uplift);
    Ok(p.ucas_initial * (1.0 + growth).powi(cohort - p.intake_year) * p.graduate_joining_rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoinerSplit {
    pub international: f64,
    pub other: f64,
    /// Other recruitments before clamping; negative means the clamp fired.
    pub raw_other: f64,
}

impl JoinerSplit {
    pub fn clamped(&self) -> bool {
        self.raw_other < 0.0
    }
}

pub fn decompose_joiners(all_joiners: f64, graduates: f64, international_rate: f64) -> Result<JoinerSplit> {
    non_negative("all joiners", all_joiners)?;
    non_negative("graduate joiners", graduates)?;
    let international = all_joiners * international_rate;
    let raw_other = all_joiners - graduates - international;
    if raw_other < 0.0 {
        tracing::debug!(all_joiners, graduates, international, raw_other, "other recruitments clamped at zero");
    }
    Ok(JoinerSplit {
        international,
        other: raw_other.max(0.0),
        raw_other,
    })
}

pub fn total_joiners(graduates: f64, international: f64, other: f64, recruitment_rate: f64, recruitment_uplift: f64) -> f64 {
    graduates + international + other * recruitment_rate * (1.0 + recruitment_uplift)
}

/// Flow breakdown for one region-year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearFlows {
    pub graduates: f64,
    pub international: f64,
    pub other: f64,
    pub total: f64,
    pub other_clamped: bool,
}

/// Joiners for one region-year under a scenario. Other recruitments are
/// split off against business-as-usual graduates so the intake lever adds
/// graduates on top of the estimated joiner stream rather than displacing
/// other recruits.
pub fn year_flows(p: &RegionParams, year: i32, all_joiners: f64, scenario: &PolicyScenario) -> Result<YearFlows> {
    let g0 = graduate_joiners(p, year, 0.0)?;
    let g = graduate_joiners(p, year, scenario.ucas_growth_uplift)?;
    let split = decompose_joiners(all_joiners, g0, p.international_joiners_rate)?;
    let total = if split.clamped() {
        total_joiners(g, split.international, 0.0, p.recruitment_rate, scenario.recruitment_uplift)
    } else {
        // same quantity as total_joiners, arranged so that the baseline
        // reproduces the joiner estimate exactly
        all_joiners + (g - g0) + split.other * (p.recruitment_rate * (1.0 + scenario.recruitment_uplift) - 1.0)
    };
    Ok(YearFlows {
        graduates: g,
        international: split.international,
        other: split.other,
        total,
        other_clamped: split.clamped(),
    })
}

/// Simulates every region over `years`, ordered by region id then year.
pub fn simulate(
    params: &[RegionParams],
    flows: &FlowEstimates,
    demand: &DemandTable,
    scenario: &PolicyScenario,
    years: RangeInclusive<i32>,
) -> Result<Vec<SimulationResult>> {
    scenario.validate()?;
    let mut sorted: Vec<&RegionParams> = params.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    if sorted.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::InvalidInput("duplicate region in parameters".into()));
    }
    let mut out = Vec::with_capacity(sorted.len() * years.clone().count());
    for p in sorted {
        p.validate()?;
        let mut stock = p.initial_headcount;
        for year in years.clone() {
            let flow = flows
                .get(&p.id, year)
                .ok_or_else(|| Error::SpanMismatch(format!("no flow estimates for region {} in {year}", p.id)))?;
            let d = demand
                .get(&p.id, year)
                .ok_or_else(|| Error::SpanMismatch(format!("no demand for region {} in {year}", p.id)))?;
            non_negative("demand", d)?;
            let f = year_flows(p, year, flow.all_joiners, scenario)?;
            let step = step_supply(stock, f.total, flow.leavers)?;
            stock = step.supply;
            out.push(SimulationResult {
                region: p.id.clone(),
                scenario: scenario.id,
                year,
                supply: stock,
                demand: d,
                gap: stock - d,
                graduate_joiners: f.graduates,
                international_joiners: f.international,
                other_recruitments: f.other,
                total_joiners: f.total,
                leavers: flow.leavers,
                other_clamped: f.other_clamped,
                stock_clamped: step.clamped,
            });
        }
    }
    Ok(out)
}
