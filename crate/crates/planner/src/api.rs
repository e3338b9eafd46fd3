//! JSON HTTP API over the run store.

use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use planner_core::forecast::DemandScenario;
use planner_core::panel::{GeoHierarchy, GeoLevel, GeoNode};
use planner_core::pipeline::ForecastRun;
use planner_core::stockflow::{presets, summarize, Objective, PolicyScenario};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{AppError, Result};
use crate::sim::{self, LeverRun, Levers, SimInputs};
use crate::store::{RunKind, RunRecord, RunRequest, RunStatus, RunStore};

pub const RESULTS_FILE: &str = "results.json";

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = match &self {
            AppError::Validation { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            AppError::NotFound(_) => StatusCode::NOT_FOUND,
            AppError::Conflict(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(self.body())).into_response()
    }
}

struct Inner {
    store: RunStore,
    hierarchy: GeoHierarchy,
    baseline: Option<String>,
    forecast: Option<ForecastRun>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// `forecast` names a finished forecast run; its hierarchy is used
    /// unless `hierarchy` points at another one.
    pub fn open(
        store: RunStore,
        baseline: Option<String>,
        forecast: Option<&str>,
        hierarchy: Option<&Path>,
    ) -> Result<Self> {
        if let Some(id) = &baseline {
            baseline_inputs(&store, id)?;
        }
        let (forecast, run_hierarchy) = match forecast {
            Some(id) => {
                let rec = store.load(id)?;
                if rec.kind != RunKind::Forecast || rec.status != RunStatus::Done {
                    return Err(AppError::invalid("forecast", format!("run {id} is not a finished forecast run")));
                }
                let run: ForecastRun = serde_json::from_slice(&store.read_artifact(&rec, "forecast.json")?)?;
                let h = GeoHierarchy::load_json(&store.artifact_path(&rec, "hierarchy.json")?)?;
                (Some(run), Some(h))
            }
            None => (None, None),
        };
        let hierarchy = match hierarchy {
            Some(p) => GeoHierarchy::load_json(p)?,
            None => run_hierarchy.unwrap_or_else(GeoHierarchy::reference),
        };
        Ok(Self(Arc::new(Inner {
            store,
            hierarchy,
            baseline,
            forecast,
        })))
    }

    pub fn store(&self) -> &RunStore {
        &self.0.store
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/runs/simulate", post(post_simulate))
        .route("/runs/{id}", get(get_run))
        .route("/regions", get(get_regions))
        .route("/forecasts/{node}", get(get_forecast))
        .route("/scenarios/presets", get(get_presets))
        .route("/policies/best", get(get_best))
        .fallback(|| async { AppError::NotFound("no such endpoint".into()) })
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub fn serve(state: AppState, addr: &str) -> Result<()> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| AppError::io(addr, e))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| AppError::io(addr, e))?;
        let local = listener.local_addr().map_err(|e| AppError::io(addr, e))?;
        tracing::info!(%local, "listening");
        eprintln!("listening on http://{local}");
        axum::serve(listener, router(state)).await.map_err(|e| AppError::io(addr, e))
    })
}

async fn blocking<T, F>(f: F) -> Result<T>
where
    F: FnOnce() -> Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AppError::io("<worker>", std::io::Error::other(e)))?
}

/// A finished sweep run's inputs. Unknown ids are 404, unfinished runs 409.
fn baseline_inputs(store: &RunStore, id: &str) -> Result<SimInputs> {
    let rec = store.record(id)?;
    if rec.status != RunStatus::Done {
        return Err(AppError::Conflict(format!(
            "baseline run {id} is {}, not DONE",
            serde_json::to_value(rec.status)?.as_str().unwrap_or("unfinished")
        )));
    }
    if rec.kind != RunKind::ScenarioSweep {
        return Err(AppError::invalid("baseline_run_id", format!("run {id} is not a scenario sweep")));
    }
    let rec = store.load(id)?;
    SimInputs::from_run(store, &rec)
}

fn resolve_baseline(state: &AppState, requested: Option<String>) -> Result<String> {
    requested
        .or_else(|| state.0.baseline.clone())
        .ok_or_else(|| AppError::invalid("baseline_run_id", "no baseline run given and the server has no default"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequest {
    pub recruitment_uplift: f64,
    pub ucas_growth_uplift: f64,
    /// Demand overlay the caller intends to display; carried through.
    #[serde(default)]
    pub demand_scenario: Option<DemandScenario>,
    #[serde(default)]
    pub regions: Option<Vec<String>>,
    #[serde(default)]
    pub baseline_run_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub run_id: String,
    pub status: RunStatus,
    pub cached: bool,
    pub baseline_run_id: String,
    pub demand_scenario: DemandScenario,
    pub label: String,
    #[serde(flatten)]
    pub run: LeverRun,
}

fn body_error(e: serde_json::Error) -> AppError {
    let msg = e.to_string();
    let field = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.starts_with("missing field") || msg.starts_with("unknown field"))
        .unwrap_or("body")
        .to_string();
    AppError::invalid(field, msg)
}

async fn post_simulate(State(state): State<AppState>, body: Bytes) -> Result<Response> {
    let req: ScenarioRequest = serde_json::from_slice(&body).map_err(body_error)?;
    let levers = Levers {
        recruitment_uplift: req.recruitment_uplift,
        ucas_growth_uplift: req.ucas_growth_uplift,
    };
    levers.validate()?;
    let baseline = resolve_baseline(&state, req.baseline_run_id.clone())?;
    let demand_scenario = req.demand_scenario.unwrap_or(DemandScenario::Base);
    let st = state.clone();
    blocking(move || {
        let store = st.store();
        let inputs = baseline_inputs(store, &baseline)?;
        let mut regions = req.regions.clone();
        if let Some(r) = regions.as_mut() {
            r.sort();
            r.dedup();
        }
        let config = json!({ "levers": levers, "regions": regions, "demand_scenario": demand_scenario });
        let run_req = RunRequest::new(RunKind::Simulate, config, 0).input("baseline", baseline.clone());
        // validate the region filter before anything is written
        let run = sim::simulate_levers(&inputs, levers, regions.as_deref())?;
        let out = store.execute(run_req, false, |w| {
            w.write_json(RESULTS_FILE, &run)?;
            Ok(())
        })?;
        let run: LeverRun = serde_json::from_slice(&store.read_artifact(&out.record, RESULTS_FILE)?)?;
        let code = if out.cached { StatusCode::OK } else { StatusCode::CREATED };
        let resp = SimulateResponse {
            run_id: out.record.id,
            status: out.record.status,
            cached: out.cached,
            baseline_run_id: baseline,
            demand_scenario,
            label: run.scenario.label(),
            run,
        };
        Ok((code, Json(resp)).into_response())
    })
    .await
}

fn parse_csv(bytes: &[u8]) -> Result<Value> {
    let mut r = csv::Reader::from_reader(bytes);
    let headers = r.headers().map_err(planner_core::Error::from)?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(planner_core::Error::from)?;
        let obj: serde_json::Map<String, Value> = headers
            .iter()
            .zip(rec.iter())
            .map(|(h, v)| {
                let val = v.parse::<f64>().ok().and_then(|x| serde_json::Number::from_f64(x)).map_or_else(|| Value::from(v), Value::Number);
                (h.to_string(), val)
            })
            .collect();
        rows.push(Value::Object(obj));
    }
    Ok(Value::Array(rows))
}

#[derive(Debug, Serialize)]
struct RunView {
    record: RunRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    results: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    national: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<Value>,
}

fn artifact_value(store: &RunStore, rec: &RunRecord, stem: &str) -> Result<Option<Value>> {
    let json_name = format!("{stem}.json");
    if rec.artifact(&json_name).is_some() {
        return Ok(Some(serde_json::from_slice(&store.read_artifact(rec, &json_name)?)?));
    }
    let csv_name = format!("{stem}.csv");
    if rec.artifact(&csv_name).is_some() {
        return Ok(Some(parse_csv(&store.read_artifact(rec, &csv_name)?)?));
    }
    Ok(None)
}

async fn get_run(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>> {
    blocking(move || {
        let store = state.store();
        let record = store.load(&id)?;
        let view = if matches!(record.kind, RunKind::Simulate | RunKind::ScenarioSweep) && record.status == RunStatus::Done {
            RunView {
                results: artifact_value(store, &record, "results")?,
                national: artifact_value(store, &record, "national")?,
                summary: artifact_value(store, &record, "summary")?,
                record,
            }
        } else {
            RunView {
                record,
                results: None,
                national: None,
                summary: None,
            }
        };
        Ok(Json(serde_json::to_value(view)?))
    })
    .await
}

#[derive(Debug, Serialize)]
struct Regions<'a> {
    national: usize,
    regions: usize,
    icbs: usize,
    nodes: &'a [GeoNode],
}

async fn get_regions(State(state): State<AppState>) -> Json<Value> {
    let h = &state.0.hierarchy;
    let count = |l| h.at_level(l).count();
    Json(
        serde_json::to_value(Regions {
            national: count(GeoLevel::National),
            regions: count(GeoLevel::Region),
            icbs: count(GeoLevel::Icb),
            nodes: h.nodes(),
        })
        .expect("hierarchy serializes"),
    )
}

#[derive(Debug, Deserialize)]
struct ForecastQuery {
    scenario: Option<String>,
}

async fn get_forecast(
    State(state): State<AppState>,
    UrlPath(node): UrlPath<String>,
    Query(q): Query<ForecastQuery>,
) -> Result<Json<Value>> {
    let run = state
        .0
        .forecast
        .as_ref()
        .ok_or_else(|| AppError::NotFound("the server was started without a forecast run".into()))?;
    let scenario: DemandScenario = match &q.scenario {
        Some(s) => s.parse().map_err(|e: planner_core::Error| AppError::invalid("scenario", e.to_string()))?,
        None => DemandScenario::Base,
    };
    let set = run
        .scenarios
        .get(scenario)
        .ok_or_else(|| AppError::NotFound(format!("no {scenario} forecast in this run")))?;
    let value = match (set.icbs.get(&node), set.nodes.get(&node)) {
        (Some(e), _) => serde_json::to_value(e)?,
        (None, Some(n)) => serde_json::to_value(n)?,
        (None, None) => return Err(AppError::NotFound(format!("unknown node `{node}`"))),
    };
    Ok(Json(json!({ "scenario": scenario, "forecast": value })))
}

#[derive(Debug, Serialize)]
struct Preset {
    #[serde(flatten)]
    scenario: PolicyScenario,
    label: String,
}

async fn get_presets() -> Json<Vec<Value>> {
    Json(
        presets()
            .into_iter()
            .map(|s| serde_json::to_value(Preset { label: s.label(), scenario: s }).expect("preset serializes"))
            .collect(),
    )
}

#[derive(Debug, Deserialize)]
struct BestQuery {
    baseline: Option<String>,
    objective: Option<String>,
}

#[derive(Debug, Serialize)]
struct BestRow {
    region: String,
    name: String,
    scenario: u32,
    label: String,
    score: f64,
    bau_score: Option<f64>,
    final_gap: f64,
    bau_final_gap: Option<f64>,
    improvement: Option<f64>,
}

async fn get_best(State(state): State<AppState>, Query(q): Query<BestQuery>) -> Result<Json<Value>> {
    let baseline = resolve_baseline(&state, q.baseline)?;
    let objective: Option<Objective> = q
        .objective
        .map(|o| o.parse().map_err(|e: planner_core::Error| AppError::invalid("objective", e.to_string())))
        .transpose()?;
    blocking(move || {
        let inputs = baseline_inputs(state.store(), &baseline)?;
        let objective = objective.unwrap_or(inputs.config.objective);
        let rows = sim::sweep(&inputs)?.rows;
        let summary = summarize(&rows, &inputs.region_ids(), objective)?;
        let names: std::collections::BTreeMap<&str, &str> =
            inputs.config.regions.iter().map(|r| (r.id.as_str(), r.name.as_str())).collect();
        let scenarios: std::collections::BTreeMap<u32, PolicyScenario> =
            inputs.config.scenarios.iter().map(|s| (s.id, *s)).collect();
        let regions: Vec<BestRow> = summary
            .best
            .iter()
            .map(|(id, c)| BestRow {
                region: id.clone(),
                name: names.get(id.as_str()).copied().unwrap_or_default().to_string(),
                scenario: c.scenario,
                label: scenarios.get(&c.scenario).map_or_else(|| format!("Scenario {}", c.scenario), |s| s.label()),
                score: c.score,
                bau_score: c.bau_score,
                final_gap: c.final_gap,
                bau_final_gap: c.bau_final_gap,
                improvement: c.bau_final_gap.map(|b| c.final_gap - b),
            })
            .collect();
        let last = |v: &[planner_core::stockflow::NationalYear]| v.last().map(|n| json!({ "year": n.year, "gap": n.gap }));
        Ok(Json(json!({
            "baseline_run_id": baseline,
            "objective": objective,
            "regions": regions,
            "national": {
                "bau": last(&summary.national_bau),
                "best": last(&summary.national_best),
                "improvement": summary.final_year_improvement,
            },
        })))
    })
    .await
}
