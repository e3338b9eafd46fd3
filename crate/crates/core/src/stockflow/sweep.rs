use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{simulate, DemandTable, FlowEstimates, SimulationResult};
use super::params::{PolicyScenario, RegionParams};
use crate::error::{Error, Result};

/// Runs each scenario; rows are ordered by scenario id, region, year.
pub fn run_scenarios(
    params: &[RegionParams],
    flows: &FlowEstimates,
    demand: &DemandTable,
    scenarios: &[PolicyScenario],
    years: RangeInclusive<i32>,
) -> Result<Vec<SimulationResult>> {
    let mut sorted = scenarios.to_vec();
    sorted.sort_by_key(|s| s.id);
    if sorted.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::InvalidInput("duplicate scenario id".into()));
    }
    let runs: Vec<Vec<SimulationResult>> = sorted
        .par_iter()
        .map(|s| simulate(params, flows, demand, s, years.clone()))
        .collect::<Result<_>>()?;
    Ok(runs.into_iter().flatten().collect())
}

/// Score minimised when choosing a policy for a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Sum of absolute gaps over the simulated years.
    #[default]
    AbsGapSum,
    /// Absolute gap in the final year.
    TerminalAbsGap,
    /// Sum of shortages only; surpluses cost nothing.
    ShortageSum,
}

impl Objective {
    pub fn score(self, gaps: &[f64]) -> f64 {
        match self {
            Objective::AbsGapSum => gaps.iter().map(|g| g.abs()).sum(),
            Objective::TerminalAbsGap => gaps.last().map_or(0.0, |g| g.abs()),
            Objective::ShortageSum => gaps.iter().map(|g| (-g).max(0.0)).sum(),
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Objective::AbsGapSum => "abs_gap_sum",
            Objective::TerminalAbsGap => "terminal_abs_gap",
            Objective::ShortageSum => "shortage_sum",
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs_gap_sum" => Ok(Objective::AbsGapSum),
            "terminal_abs_gap" => Ok(Objective::TerminalAbsGap),
            "shortage_sum" => Ok(Objective::ShortageSum),
            other => Err(Error::InvalidInput(format!("unknown objective `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyChoice {
    pub scenario: u32,
    pub score: f64,
    /// Score of scenario 0, when it was simulated.
    pub bau_score: Option<f64>,
    pub final_gap: f64,
    pub bau_final_gap: Option<f64>,
}

/// Gap series per (region, scenario), years ascending.
fn gap_series(rows: &[SimulationResult]) -> BTreeMap<&str, BTreeMap<u32, Vec<(i32, f64)>>> {
    let mut out: BTreeMap<&str, BTreeMap<u32, Vec<(i32, f64)>>> = BTreeMap::new();
    for r in rows {
        out.entry(r.region.as_str()).or_default().entry(r.scenario).or_default().push((r.year, r.gap));
    }
    for per in out.values_mut() {
        for s in per.values_mut() {
            s.sort_by_key(|(y, _)| *y);
        }
    }
    out
}

/// Lowest-scoring scenario per region; ties go to the lower id.
pub fn best_policy(rows: &[SimulationResult], objective: Objective) -> Result<BTreeMap<String, PolicyChoice>> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no simulation results".into()));
    }
    let mut out = BTreeMap::new();
    for (region, per) in gap_series(rows) {
        let years: Vec<i32> = per.values().next().map(|s| s.iter().map(|(y, _)| *y).collect()).unwrap_or_default();
        let mut best: Option<(u32, f64, f64)> = None;
        for (&id, series) in &per {
            if series.iter().map(|(y, _)| *y).ne(years.iter().copied()) {
                return Err(Error::SpanMismatch(format!("region {region}: scenario {id} covers different years")));
            }
            let gaps: Vec<f64> = series.iter().map(|(_, g)| *g).collect();
            let score = objective.score(&gaps);
            if best.is_none_or(|(_, b, _)| score < b) {
                best = Some((id, score, *gaps.last().unwrap_or(&0.0)));
            }
        }
        let (scenario, score, final_gap) = best.expect("at least one scenario per region");
        let bau = per.get(&0).map(|s| s.iter().map(|(_, g)| *g).collect::<Vec<_>>());
        out.insert(
            region.to_string(),
            PolicyChoice {
                scenario,
                score,
                bau_score: bau.as_ref().map(|g| objective.score(g)),
                final_gap,
                bau_final_gap: bau.as_ref().and_then(|g| g.last().copied()),
            },
        );
    }
    Ok(out)
}

/// Rows following a per-region scenario choice.
pub fn policy_rows(rows: &[SimulationResult], choice: &BTreeMap<String, u32>) -> Vec<SimulationResult> {
    rows.iter()
        .filter(|r| choice.get(&r.region) == Some(&r.scenario))
        .cloned()
        .collect()
}

pub fn scenario_rows(rows: &[SimulationResult], scenario: u32) -> Vec<SimulationResult> {
    rows.iter().filter(|r| r.scenario == scenario).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NationalYear {
    pub year: i32,
    pub supply: f64,
    pub demand: f64,
    pub gap: f64,
}

/// Sums one row per (region, year) into national totals. Every expected
/// region must be present for every year.
pub fn national_rollup(rows: &[SimulationResult], regions: &[String]) -> Result<Vec<NationalYear>> {
    let expected: BTreeSet<&str> = regions.iter().map(String::as_str).collect();
    let mut cells: BTreeMap<i32, BTreeMap<&str, &SimulationResult>> = BTreeMap::new();
    for r in rows {
        if !expected.contains(r.region.as_str()) {
            return Err(Error::UnknownNode {
                code: r.region.clone(),
                context: Some("national rollup".into()),
            });
        }
        if cells.entry(r.year).or_default().insert(&r.region, r).is_some() {
            return Err(Error::InvalidInput(format!("region {} has more than one row for {}", r.region, r.year)));
        }
    }
    let mut out = Vec::with_capacity(cells.len());
    for (year, per) in cells {
        if let Some(missing) = expected.iter().find(|id| !per.contains_key(*id)) {
            return Err(Error::MissingRegion(format!("{missing} in {year}")));
        }
        // BTreeMap order makes the sums independent of input order
        let supply: f64 = per.values().map(|r| r.supply).sum();
        let demand: f64 = per.values().map(|r| r.demand).sum();
        let gap: f64 = per.values().map(|r| r.gap).sum();
        out.push(NationalYear { year, supply, demand, gap });
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("no rows to roll up".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub objective: Objective,
    pub best: BTreeMap<String, PolicyChoice>,
    pub national_bau: Vec<NationalYear>,
    pub national_best: Vec<NationalYear>,
    /// Final-year national gap under the best policies minus under BAU.
    pub final_year_improvement: f64,
}

pub fn summarize(rows: &[SimulationResult], regions: &[String], objective: Objective) -> Result<SweepSummary> {
    let best = best_policy(rows, objective)?;
    let national_bau = national_rollup(&scenario_rows(rows, 0), regions)?;
    let choice: BTreeMap<String, u32> = best.iter().map(|(k, v)| (k.clone(), v.scenario)).collect();
    let national_best = national_rollup(&policy_rows(rows, &choice), regions)?;
    let final_year_improvement = national_best.last().map_or(0.0, |b| b.gap) - national_bau.last().map_or(0.0, |b| b.gap);
    Ok(SweepSummary {
        objective,
        best,
        national_bau,
        national_best,
        final_year_improvement,
    })
}
