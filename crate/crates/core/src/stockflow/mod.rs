//! Annual stock-flow supply model and policy sweep.

pub mod calibrate;
pub mod io;
pub mod model;
pub mod params;
pub mod sweep;

pub use calibrate::{calibrate_flows, Calibration, SupplyTarget};
pub use io::{
    read_demand, read_demand_csv, read_flows, read_flows_csv, write_demand, write_flows, write_national, write_results,
    StockflowConfig,
};
pub use model::{
    decompose_joiners, graduate_joiners, simulate, step_supply, total_joiners, year_flows, AnnualFlow, DemandTable,
    FlowEstimates, JoinerSplit, SimulationResult, StepOutcome, YearFlows,
};
pub use params::{preset_for, presets, reference_regions, PolicyScenario, RegionParams, FIRST_YEAR, LAST_YEAR};
pub use sweep::{
    best_policy, national_rollup, policy_rows, run_scenarios, scenario_rows, summarize, NationalYear, Objective,
    PolicyChoice, SweepSummary,
};
