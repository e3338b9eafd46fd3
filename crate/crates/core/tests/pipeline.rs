use std::collections::BTreeMap;

use planner_core::features::FeatureSpec;
use planner_core::forecast::{DemandScenario, GbdtParams};
use planner_core::panel::{synth_bundle, SynthConfig, SynthOutput, VariableId};
use planner_core::pipeline::*;
use planner_core::stockflow::{presets, run_scenarios, RegionParams, FIRST_YEAR, LAST_YEAR};

fn small() -> SynthOutput {
    let cfg = SynthConfig {
        icbs_per_region: vec![2, 1, 1, 1, 1, 1, 1],
        ..SynthConfig::default()
    };
    synth_bundle(11, &cfg, 72).unwrap()
}

fn quick() -> ForecastConfig {
    let mut c = ForecastConfig::default();
    c.engine.n_paths = 200;
    c.grid = vec![GbdtParams { n_trees: 50, ..GbdtParams::default() }];
    c
}

#[test]
fn pool_covers_levels_lags_and_month() {
    let out = small();
    let pool = candidate_pool(&out.panel, VariableId::Headcount, &[1, 2]);
    assert!(pool.contains(&FeatureSpec::MonthOfYear));
    assert!(pool.contains(&FeatureSpec::Lag(VariableId::Mhs01, 2)));
    assert!(pool.contains(&FeatureSpec::Level(VariableId::TotalSpend)));
    assert!(!pool.contains(&FeatureSpec::Lag(VariableId::TotalSpend, 1)));
    assert!(!pool.iter().any(|s| s.variable() == Some(VariableId::Headcount)));
}

#[test]
fn feature_selection_keeps_at_most_k() {
    let out = small();
    let cfg = FeatureConfig { top_k: 10, ..FeatureConfig::default() };
    let rep = select_features(&out.panel, &out.hierarchy, &cfg).unwrap();
    assert!(rep.selected.len() <= 10);
    assert_eq!(rep.selected.len(), rep.top.features.len());
    let t = &rep.lasso.objective_trace;
    assert!(t.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
}

#[test]
fn forecast_run_feeds_the_supply_model() {
    let out = small();
    let features = vec![FeatureSpec::Lag(VariableId::Mhs01, 1), FeatureSpec::Level(VariableId::Mhs29)];
    let run = run_forecast(&out.panel, &out.hierarchy, Some(&out.projection), &features, &quick()).unwrap();
    assert_eq!(run.horizon, 72);
    assert_eq!(run.globals.len(), 2);
    assert!(run.globals.iter().any(|g| g.standardized));
    let back: ForecastRun = serde_json::from_str(&serde_json::to_string(&run).unwrap()).unwrap();
    assert_eq!(back, run);
    for s in DemandScenario::ALL {
        let f = run.scenarios.get(s).unwrap();
        assert_eq!(f.icbs.len(), 8);
        assert_eq!(f.nodes.len(), 8 + 7 + 1);
    }
    let flows = annual_flows(&run.predictors, &out.hierarchy).unwrap();
    let demand = annual_demand(&run.scenarios, DemandScenario::Base, &out.hierarchy).unwrap();
    assert_eq!(flows.regions.len(), 7);
    for years in flows.regions.values() {
        assert_eq!(years.keys().copied().collect::<Vec<_>>(), (FIRST_YEAR..=LAST_YEAR).collect::<Vec<_>>());
        assert!(years.values().all(|f| f.all_joiners > 0.0 && f.leavers > 0.0));
    }
    // region flows are sums over their ICBs
    let joiners = run.predictors.get("ICB01", VariableId::Joiners).unwrap();
    let joiners2 = run.predictors.get("ICB02", VariableId::Joiners).unwrap();
    let want: f64 = (0..12).map(|i| joiners.point[i] + joiners2.point[i]).sum();
    assert!((flows.get("Y61", 2023).unwrap().all_joiners - want).abs() < 1e-6);

    let stock = final_regional_stock(&out.panel, &out.hierarchy, VariableId::Headcount).unwrap();
    let params: Vec<RegionParams> = stock.keys().map(|id| RegionParams::new(id.clone(), 1000.0, 100.0, 0.1)).collect();
    let params = rescale_regions(&params, &stock).unwrap();
    for p in &params {
        assert_eq!(p.initial_headcount, stock[&p.id]);
        assert!((p.ucas_initial / p.initial_headcount - 0.1).abs() < 1e-12);
    }
    let rows = run_scenarios(&params, &flows, &demand, &presets(), FIRST_YEAR..=LAST_YEAR).unwrap();
    assert_eq!(rows.len(), 8 * 7 * 6);
}

#[test]
fn rescale_requires_every_region() {
    let p = vec![RegionParams::new("Y61", 100.0, 10.0, 0.1)];
    assert!(rescale_regions(&p, &BTreeMap::new()).is_err());
}

#[test]
fn coverage_counts_every_holdout_point() {
    let out = small();
    let features = vec![FeatureSpec::Lag(VariableId::Mhs01, 1)];
    let rep = holdout_coverage(&out.panel, &out.hierarchy, &features, &quick(), 12).unwrap();
    assert_eq!(rep.series, 8);
    assert_eq!(rep.points, 96);
    assert!(rep.coverage >= 0.0 && rep.coverage <= 1.0);
    assert!(holdout_coverage(&out.panel, &out.hierarchy, &features, &quick(), 40).is_err());
}
