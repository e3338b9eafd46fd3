//! Backs out joiner and leaver estimates that reproduce known supply
//! trajectories, for building reference fixtures from published tables.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::model::{graduate_joiners, AnnualFlow, FlowEstimates};
use super::params::{PolicyScenario, RegionParams};
use crate::error::{Error, Result};

/// What is known about one region's supply.
#[derive(Debug, Clone, PartialEq)]
pub enum SupplyTarget {
    /// Business-as-usual supply per year.
    Baseline(Vec<f64>),
    /// Supply per year under the given policy; the baseline is solved for.
    Policy(PolicyScenario, Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub flows: FlowEstimates,
    /// Business-as-usual supply implied for every region.
    pub baseline: BTreeMap<String, Vec<f64>>,
    /// Other recruitments as a share of the previous year's stock, per year.
    pub other_rate: Vec<f64>,
}

/// Solves for flows so that every target is met exactly and the baseline
/// supplies sum to `national_baseline`.
///
/// Other recruitments are taken as a common share of each region's
/// previous-year baseline stock. For every year that share is fixed by the
/// national total; with no policy regions `fallback_other_rate` is used.
pub fn calibrate_flows(
    params: &[RegionParams],
    targets: &BTreeMap<String, SupplyTarget>,
    national_baseline: Option<&[f64]>,
    fallback_other_rate: f64,
    years: RangeInclusive<i32>,
) -> Result<Calibration> {
    let years: Vec<i32> = years.collect();
    let by_id: BTreeMap<&str, &RegionParams> = params.iter().map(|p| (p.id.as_str(), p)).collect();
    for id in by_id.keys() {
        if !targets.contains_key(*id) {
            return Err(Error::MissingRegion(id.to_string()));
        }
    }
    for (id, t) in targets {
        let p = by_id.get(id.as_str()).ok_or_else(|| Error::UnknownNode {
            code: id.clone(),
            context: Some("calibration targets".into()),
        })?;
        p.validate()?;
        let (SupplyTarget::Baseline(v) | SupplyTarget::Policy(_, v)) = t;
        if v.len() != years.len() {
            return Err(Error::SpanMismatch(format!("region {id}: {} target years for {} simulated", v.len(), years.len())));
        }
        if let SupplyTarget::Policy(s, _) = t {
            if s.recruitment_uplift <= 0.0 {
                return Err(Error::InvalidInput(format!("region {id}: a policy target needs a positive recruitment uplift")));
            }
        }
    }
    if let Some(n) = national_baseline {
        if n.len() != years.len() {
            return Err(Error::SpanMismatch("national baseline length".into()));
        }
    }

    let mut prev: BTreeMap<&str, f64> = by_id.iter().map(|(id, p)| (*id, p.initial_headcount)).collect();
    let mut prev_policy = prev.clone();
    let mut prev_nat: f64 = prev.values().sum();
    let mut out = Calibration {
        flows: FlowEstimates::default(),
        baseline: BTreeMap::new(),
        other_rate: Vec::with_capacity(years.len()),
    };

    for (i, &year) in years.iter().enumerate() {
        // lever multiplier minus baseline multiplier, and known parts of the
        // baseline change
        let mut lever_stock = 0.0;
        let mut known_change = 0.0;
        let mut grad_delta = BTreeMap::new();
        for (id, t) in targets {
            let p = by_id[id.as_str()];
            match t {
                SupplyTarget::Baseline(v) => known_change += v[i] - prev[id.as_str()],
                SupplyTarget::Policy(s, v) => {
                    let dg = graduate_joiners(p, year, s.ucas_growth_uplift)? - graduate_joiners(p, year, 0.0)?;
                    grad_delta.insert(id.as_str(), dg);
                    known_change += v[i] - prev_policy[id.as_str()] - dg;
                    lever_stock += prev[id.as_str()] * p.recruitment_rate * s.recruitment_uplift;
                }
            }
        }
        let k = match national_baseline {
            Some(n) if lever_stock > 0.0 => (known_change - (n[i] - prev_nat)) / lever_stock,
            Some(n) => {
                let residual = known_change - (n[i] - prev_nat);
                if residual.abs() > 1e-6 * n[i].abs().max(1.0) {
                    return Err(Error::InvalidInput(format!(
                        "{year}: national baseline disagrees with regional baselines by {residual}"
                    )));
                }
                fallback_other_rate
            }
            None => fallback_other_rate,
        };
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::InvalidValue(format!("{year}: implied other-recruitment share {k} is negative")));
        }
        out.other_rate.push(k);

        let mut nat = 0.0;
        for (id, t) in targets {
            let p = by_id[id.as_str()];
            let s0 = prev[id.as_str()];
            let other = k * s0;
            let change = match t {
                SupplyTarget::Baseline(v) => v[i] - s0,
                SupplyTarget::Policy(s, v) => {
                    v[i] - prev_policy[id.as_str()] - grad_delta[id.as_str()] - other * p.recruitment_rate * s.recruitment_uplift
                }
            };
            let g0 = graduate_joiners(p, year, 0.0)?;
            let all = (other + g0) / (1.0 - p.international_joiners_rate);
            let joiners = all + other * (p.recruitment_rate - 1.0);
            let leavers = joiners - change;
            if leavers < 0.0 {
                return Err(Error::InvalidValue(format!("region {id}, {year}: implied leavers {leavers} are negative")));
            }
            out.flows.insert(id.clone(), year, AnnualFlow { all_joiners: all, leavers });
            let next = s0 + change;
            out.baseline.entry(id.clone()).or_default().push(next);
            prev.insert(by_id.get_key_value(id.as_str()).unwrap().0, next);
            if let SupplyTarget::Policy(_, v) = t {
                prev_policy.insert(by_id.get_key_value(id.as_str()).unwrap().0, v[i]);
            } else {
                prev_policy.insert(by_id.get_key_value(id.as_str()).unwrap().0, next);
            }
            nat += next;
        }
        prev_nat = nat;
    }
    Ok(out)
}
