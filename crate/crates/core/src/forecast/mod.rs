//! Model zoo, ensembles, demand scenarios and bottom-up aggregation.

pub mod arima;
pub mod bottom_up;
pub mod conformal;
pub mod engine;
pub mod ets;
pub mod export;
pub mod gbdt;
pub mod global;
pub mod linreg;
pub mod path;
pub mod predictors;
pub mod scenarios;
pub mod sim;
pub mod snaive;

pub use arima::{arima_candidates, auto_arima, choose_d, fit_arima, kpss_level, select_arima, ArimaFit};
pub use bottom_up::{bottom_up, sum_forecasts, NodeForecast};
pub use conformal::{conformal_interval, ConformalWidth};
pub use engine::{ensemble_members, forecast_node, global_members, univariate_members, DroppedMember, EngineConfig};
pub use ets::{auto_ets, ets_candidates, fit_ets, select_ets, EtsFit, EtsForm};
pub use gbdt::{default_grid, fit_gbdt, grid_search_gbdt, Gbdt, GbdtParams, GridResult};
pub use global::{extend_panel, fit_global, GlobalConfig, GlobalModel, Regressor, TargetTransform};
pub use linreg::{fit_ols, LinearModel};
pub use path::{annual_rollup, ensemble, AnnualValue, EnsembleForecast, ForecastPath, ModelFamily, ModelSpec, Scope};
pub use predictors::{forecast_predictors, DemandScenario, PredictorForecasts};
pub use scenarios::{build_demand_scenarios, DemandScenarioSet, ScenarioForecast};
pub use snaive::snaive_forecast;
