//! Subcommands. Every command runs through the run store and reports the
//! resulting run as one JSON object on stdout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use planner_core::forecast::export::write_annual_csv;
use planner_core::forecast::DemandScenario;
use planner_core::panel::{load_panel, synth_bundle, write_sources, GeoHierarchy, PanelDataset, RosterManifest, SynthConfig};
use planner_core::pipeline::{
    annual_demand, annual_flows, final_regional_stock, holdout_coverage, run_forecast, select_features, FeatureConfig,
    FeatureReport, ForecastConfig, ForecastRun,
};
use planner_core::stockflow::{write_demand, write_flows, write_national, write_results};
use serde::{de::DeserializeOwned, Serialize};
use serde_json::{json, Value};

use crate::error::{AppError, Result};
use crate::sim::{self, SimInputs, CONFIG_FILE, DEMAND_FILE, FLOWS_FILE};
use crate::store::{digest_bytes, digest_file, Outcome, RunKind, RunRequest, RunStore};

#[derive(Debug, Parser)]
#[command(name = "planner", version, about = "Workforce demand forecasting and supply scenario planning")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Run-store root (defaults to $PLANNER_RUN_DIR, then ./runs).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Recompute even when an identical run is stored.
    #[arg(long, global = true)]
    pub force: bool,
    /// Encoding of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic panel with its sources and hierarchy.
    Synth {
        /// Generator settings (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Assemble source files listed in a roster manifest into a tidy panel.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        hierarchy: Option<PathBuf>,
    },
    /// Rank candidate predictors with the lasso.
    Features {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit the ensemble and produce BASE/HIGH/LOW forecasts at every level.
    Forecast {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        /// Future population series, required when population is a feature.
        #[arg(long)]
        projection: Option<PathBuf>,
        /// Feature report from `features`; selection runs inline without it.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also score interval coverage on this many held-out months.
        #[arg(long)]
        holdout: Option<usize>,
    },
    /// Run the policy sweep and pick the best policy per region.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        flows: Option<PathBuf>,
        #[arg(long)]
        demand: Option<PathBuf>,
        /// Region to starting headcount (JSON); rescales region parameters.
        #[arg(long)]
        stock: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Sweep config to run (or reuse) as the default baseline.
        #[arg(long, conflicts_with = "baseline")]
        config: Option<PathBuf>,
        /// Id of a finished sweep run to use as the default baseline.
        #[arg(long)]
        baseline: Option<String>,
        /// Id of a finished forecast run to serve forecasts from.
        #[arg(long)]
        forecast: Option<String>,
        #[arg(long)]
        hierarchy: Option<PathBuf>,
    },
}

/// What a command prints on success.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub run_id: String,
    pub kind: RunKind,
    pub cached: bool,
    pub dir: PathBuf,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

impl Report {
    fn new(store: &RunStore, o: &Outcome, summary: Value) -> Self {
        Self {
            run_id: o.record.id.clone(),
            kind: o.record.kind,
            cached: o.cached,
            dir: store.run_dir(&o.record.id),
            outputs: o.record.outputs.iter().map(|a| a.path.clone()).collect(),
            summary,
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| planner_core::Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }.into())
}

fn optional_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

pub fn load_hierarchy(path: Option<&Path>) -> Result<GeoHierarchy> {
    Ok(match path {
        Some(p) => GeoHierarchy::load_json(p)?,
        None => GeoHierarchy::reference(),
    })
}

fn hierarchy_digest(h: &GeoHierarchy) -> String {
    digest_bytes(h.to_json().as_bytes())
}

fn read_panel(path: &Path, h: &GeoHierarchy) -> Result<PanelDataset> {
    Ok(PanelDataset::read_tidy_path(path, Some(h))?)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> planner_core::Result<()>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    f(&mut out)?;
    Ok(out)
}

fn tabular<T: Serialize>(format: Format, stem: &str, value: &T, csv: impl FnOnce(&mut Vec<u8>) -> planner_core::Result<()>) -> Result<(String, Vec<u8>)> {
    Ok(match format {
        Format::Csv => (format!("{stem}.csv"), csv_bytes(csv)?),
        Format::Json => {
            let mut text = serde_json::to_vec_pretty(value)?;
            text.push(b'\n');
            (format!("{stem}.json"), text)
        }
    })
}

pub fn synth(store: &RunStore, g: &GlobalArgs, config: Option<&Path>) -> Result<Report> {
    let cfg: SynthConfig = optional_json(config)?;
    cfg.validate()?;
    let horizon = ForecastConfig::default().engine.horizon;
    let req = RunRequest::new(RunKind::Synth, json!({ "synth": cfg, "projection_months": horizon }), g.seed);
    let out = store.execute(req, g.force, |w| {
        let b = synth_bundle(g.seed, &cfg, horizon)?;
        w.write("panel.csv", b.panel.to_tidy_string().as_bytes())?;
        w.write("projection.csv", b.projection.to_tidy_string().as_bytes())?;
        w.write("hierarchy.json", b.hierarchy.to_json().as_bytes())?;
        let manifest = write_sources(&b.sources, Some(b.panel.span()), &w.dir().join("sources"))?;
        for s in &manifest.sources {
            w.register(&format!("sources/{}", s.file));
        }
        w.register("sources/roster.json");
        Ok(())
    })?;
    let summary = json!({ "couplings": cfg.couplings, "icbs": cfg.icbs_per_region.iter().sum::<usize>() });
    Ok(Report::new(store, &out, summary))
}

pub fn ingest(store: &RunStore, g: &GlobalArgs, manifest: &Path, hierarchy: Option<&Path>) -> Result<Report> {
    let h = load_hierarchy(hierarchy)?;
    let roster: RosterManifest = read_json(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut req = RunRequest::new(RunKind::Ingest, serde_json::to_value(&roster)?, g.seed)
        .input("hierarchy", hierarchy_digest(&h));
    for s in &roster.sources {
        req = req.input(&format!("source:{}", s.file), digest_file(&base.join(&s.file))?);
    }
    let mut span = None;
    let out = store.execute(req, g.force, |w| {
        let panel = load_panel(manifest, &h)?;
        span = Some(panel.span());
        w.write("panel.csv", panel.to_tidy_string().as_bytes())?;
        w.write("hierarchy.json", h.to_json().as_bytes())?;
        Ok(())
    })?;
    let summary = span.map_or(Value::Null, |s| json!({ "start": s.start.to_string(), "end": s.end().to_string() }));
    Ok(Report::new(store, &out, summary))
}

pub fn features(store: &RunStore, g: &GlobalArgs, panel: &Path, hierarchy: Option<&Path>, config: Option<&Path>) -> Result<Report> {
    let h = load_hierarchy(hierarchy)?;
    let cfg: FeatureConfig = optional_json(config)?;
    let req = RunRequest::new(RunKind::Features, serde_json::to_value(&cfg)?, g.seed)
        .input("panel", digest_file(panel)?)
        .input("hierarchy", hierarchy_digest(&h));
    let out = store.execute(req, g.force, |w| {
        let p = read_panel(panel, &h)?;
        let report = select_features(&p, &h, &cfg)?;
        w.write_json("features.json", &report)?;
        Ok(())
    })?;
    let report: FeatureReport = serde_json::from_slice(&store.read_artifact(&out.record, "features.json")?)?;
    let summary = json!({
        "selected": report.selected.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        "r_squared": report.lasso.r_squared,
    });
    Ok(Report::new(store, &out, summary))
}

pub struct ForecastArgs<'a> {
    pub panel: &'a Path,
    pub hierarchy: Option<&'a Path>,
    pub projection: Option<&'a Path>,
    pub features: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub holdout: Option<usize>,
}

pub fn forecast(store: &RunStore, g: &GlobalArgs, a: &ForecastArgs) -> Result<Report> {
    let h = load_hierarchy(a.hierarchy)?;
    let mut cfg: ForecastConfig = optional_json(a.config)?;
    cfg.engine.seed = g.seed;
    let mut req = RunRequest::new(
        RunKind::Forecast,
        json!({ "forecast": cfg, "holdout": a.holdout, "format": g.format }),
        g.seed,
    )
    .input("panel", digest_file(a.panel)?)
    .input("hierarchy", hierarchy_digest(&h));
    if let Some(p) = a.projection {
        req = req.input("projection", digest_file(p)?);
    }
    if let Some(p) = a.features {
        req = req.input("features", digest_file(p)?);
    }
    let out = store.execute(req, g.force, |w| {
        let panel = read_panel(a.panel, &h)?;
        let projection = a.projection.map(|p| read_panel(p, &h)).transpose()?;
        let selected = match a.features {
            Some(p) => read_json::<FeatureReport>(p)?.selected,
            None => {
                let report = select_features(&panel, &h, &FeatureConfig { target: cfg.target, ..FeatureConfig::default() })?;
                w.write_json("features.json", &report)?;
                report.selected
            }
        };
        let run = run_forecast(&panel, &h, projection.as_ref(), &selected, &cfg)?;
        w.write_json("forecast.json", &run)?;
        w.write("hierarchy.json", h.to_json().as_bytes())?;
        let (name, bytes) = tabular(g.format, "annual", &run.scenarios, |b| write_annual_csv(&run.scenarios, b))?;
        w.write(&name, &bytes)?;
        let flows = annual_flows(&run.predictors, &h)?;
        let demand = annual_demand(&run.scenarios, DemandScenario::Base, &h)?;
        w.write(FLOWS_FILE, &csv_bytes(|b| write_flows(&flows, b))?)?;
        w.write(DEMAND_FILE, &csv_bytes(|b| write_demand(&demand, b))?)?;
        w.write_json("stock.json", &final_regional_stock(&panel, &h, cfg.target)?)?;
        if let Some(n) = a.holdout {
            let cov = holdout_coverage(&panel, &h, &selected, &cfg, n)?;
            w.write_json("coverage.json", &cov)?;
        }
        Ok(())
    })?;
    let run: ForecastRun = serde_json::from_slice(&store.read_artifact(&out.record, "forecast.json")?)?;
    let national = &run.scenarios.get(DemandScenario::Base).and_then(|s| s.nodes.get(h.national().id.as_str()));
    let mut summary = json!({
        "origin": run.origin.to_string(),
        "globals": run.globals,
        "national_base": national.map(|n| &n.annual),
    });
    if out.record.artifact("coverage.json").is_some() {
        summary["coverage"] = serde_json::from_slice(&store.read_artifact(&out.record, "coverage.json")?)?;
    }
    Ok(Report::new(store, &out, summary))
}

pub fn simulate(
    store: &RunStore,
    g: &GlobalArgs,
    config: &Path,
    flows: Option<&Path>,
    demand: Option<&Path>,
    stock: Option<&Path>,
) -> Result<Report> {
    let stock = stock.map(sim::load_stock).transpose()?;
    let inputs = SimInputs::load(config, flows, demand, stock.as_ref())?;
    let mut req = RunRequest::new(
        RunKind::ScenarioSweep,
        json!({ "stockflow": inputs.config, "format": g.format }),
        g.seed,
    );
    req.inputs = inputs.input_digests()?;
    let out = store.execute(req, g.force, |w| {
        let s = sim::sweep(&inputs)?;
        w.write_json(CONFIG_FILE, &inputs.snapshot_config())?;
        w.write(FLOWS_FILE, &inputs.flows_csv()?)?;
        w.write(DEMAND_FILE, &inputs.demand_csv()?)?;
        let (name, bytes) = tabular(g.format, "results", &s.rows, |b| write_results(&s.rows, b))?;
        w.write(&name, &bytes)?;
        let blocks = [("bau", &s.summary.national_bau[..]), ("best", &s.summary.national_best[..])];
        let national: BTreeMap<&str, _> = blocks.iter().copied().collect();
        let (name, bytes) = tabular(g.format, "national", &national, |b| write_national(&blocks, b))?;
        w.write(&name, &bytes)?;
        w.write_json("summary.json", &s.summary)?;
        Ok(())
    })?;
    let summary: Value = serde_json::from_slice(&store.read_artifact(&out.record, "summary.json")?)?;
    let best: BTreeMap<String, Value> = summary["best"]
        .as_object()
        .map(|m| m.iter().map(|(k, v)| (k.clone(), v["scenario"].clone())).collect())
        .unwrap_or_default();
    let short = json!({
        "objective": summary["objective"],
        "best": best,
        "final_year_improvement": summary["final_year_improvement"],
        "national_bau": summary["national_bau"],
        "national_best": summary["national_best"],
    });
    Ok(Report::new(store, &out, short))
}

/// Dispatches one parsed command line. `serve` blocks until shutdown.
pub fn run(cli: Cli) -> Result<Option<Report>> {
    let g = &cli.global;
    let store = RunStore::open(RunStore::resolve_root(g.out.as_deref()))?;
    let report = match &cli.command {
        Command::Synth { config } => synth(&store, g, config.as_deref())?,
        Command::Ingest { manifest, hierarchy } => ingest(&store, g, manifest, hierarchy.as_deref())?,
        Command::Features { panel, hierarchy, config } => features(&store, g, panel, hierarchy.as_deref(), config.as_deref())?,
        Command::Forecast {
            panel,
            hierarchy,
            projection,
            features,
            config,
            holdout,
        } => forecast(
            &store,
            g,
            &ForecastArgs {
                panel,
                hierarchy: hierarchy.as_deref(),
                projection: projection.as_deref(),
                features: features.as_deref(),
                config: config.as_deref(),
                holdout: *holdout,
            },
        )?,
        Command::Simulate { config, flows, demand, stock } => {
            simulate(&store, g, config, flows.as_deref(), demand.as_deref(), stock.as_deref())?
        }
        Command::Serve {
            addr,
            config,
            baseline,
            forecast,
            hierarchy,
        } => {
            let baseline = match config {
                Some(c) => Some(simulate(&store, g, c, None, None, None)?.run_id),
                None => baseline.clone(),
            };
            let state = crate::api::AppState::open(store, baseline, forecast.as_deref(), hierarchy.as_deref())?;
            crate::api::serve(state, addr)?;
            return Ok(None);
        }
    };
    Ok(Some(report))
}
