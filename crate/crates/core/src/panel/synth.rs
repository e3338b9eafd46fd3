//! Seeded synthetic panel standing in for the non-redistributable workforce
//! data. Headcount is driven by lagged patient-demand predictors with
//! configurable weights, so feature selection has a known ground truth.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::PanelDataset;
use super::hierarchy::{GeoHierarchy, GeoLevel, REFERENCE_ICB_LAYOUT};
use super::ingest::{assemble_panel, disaggregate, SourceTable};
use super::variable::{Frequency, VariableId};
use crate::calendar::{Month, MonthSpan, Period};
use crate::error::{Error, Result};
use crate::stats::rng;

/// Headcount at month t gains `weight x (predictor(t - lag) / typical level)`
/// of the node's headcount scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub predictor: VariableId,
    pub lag: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub icbs_per_region: Vec<usize>,
    pub start: String,
    pub months: usize,
    /// Typical relative drift of a series over the whole span.
    pub trend_amplitude: f64,
    pub seasonal_amplitude: f64,
    /// Marginal sd of the relative AR(1) noise on predictors.
    pub noise_amplitude: f64,
    /// Relative sd of the idiosyncratic headcount noise.
    pub headcount_noise: f64,
    /// Headcount of a unit-size ICB.
    pub headcount_scale: f64,
    pub couplings: Vec<Coupling>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            icbs_per_region: REFERENCE_ICB_LAYOUT.to_vec(),
            start: "2018-06".into(),
            months: 55,
            trend_amplitude: 0.08,
            seasonal_amplitude: 0.02,
            noise_amplitude: 0.02,
            headcount_noise: 0.004,
            headcount_scale: 1400.0,
            couplings: VariableId::PATIENT
                .iter()
                .map(|&p| Coupling {
                    predictor: p,
                    lag: 1,
                    weight: 0.2,
                })
                .collect(),
        }
    }
}

impl SynthConfig {
    /// Noise-free, season-free configuration: every series is a ramp.
    pub fn pure_trend() -> Self {
        Self {
            seasonal_amplitude: 0.0,
            noise_amplitude: 0.0,
            headcount_noise: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.icbs_per_region.is_empty() || self.icbs_per_region.iter().any(|&c| c == 0) {
            return bad("every region needs at least one ICB".into());
        }
        if self.months < 2 {
            return bad(format!("months must be at least 2, got {}", self.months));
        }
        for (name, v) in [
            ("trend_amplitude", self.trend_amplitude),
            ("seasonal_amplitude", self.seasonal_amplitude),
            ("noise_amplitude", self.noise_amplitude),
            ("headcount_noise", self.headcount_noise),
        ] {
            if !(0.0..=0.5).contains(&v) {
                return bad(format!("{name} must lie in [0, 0.5], got {v}"));
            }
        }
        if !(self.headcount_scale > 0.0) {
            return bad("headcount_scale must be positive".into());
        }
        let mut total = 0.0;
        for c in &self.couplings {
            if c.lag == 0 || c.lag > 12 {
                return bad(format!("coupling lag must be in 1..=12, got {}", c.lag));
            }
            if !base_level(c.predictor).is_some_and(|b| b.level == GeoLevel::Icb)
                || c.predictor.frequency() != Frequency::Monthly
                || c.predictor == VariableId::Headcount
            {
                return bad(format!("{} cannot drive headcount", c.predictor));
            }
            if !(0.0..=1.0).contains(&c.weight) {
                return bad(format!("coupling weight must lie in [0, 1], got {}", c.weight));
            }
            total += c.weight;
        }
        if total > 1.0 + 1e-12 {
            return bad(format!("coupling weights sum to {total}, must not exceed 1"));
        }
        self.start.parse::<Month>()?;
        Ok(())
    }

    fn span(&self) -> Result<MonthSpan> {
        Ok(MonthSpan::new(self.start.parse()?, self.months))
    }
}

/// Everything the generator produces in one pass.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub hierarchy: GeoHierarchy,
    /// Sources at native frequency, ready to write out for ingestion.
    pub sources: Vec<SourceTable>,
    pub panel: PanelDataset,
    /// Future population path per ICB (noise-free continuation).
    pub projection: PanelDataset,
}

struct Base {
    level: GeoLevel,
    /// Level for a unit-size node.
    value: f64,
    scales_with_size: bool,
}

fn base_level(v: VariableId) -> Option<Base> {
    use VariableId::*;
    let b = |level, value, scales_with_size| Some(Base { level, value, scales_with_size });
    match v {
        Headcount | Leavers | Joiners | Vacancies | IntlJoiners => None,
        Mhs01 => b(GeoLevel::Icb, 30_000.0, true),
        Mhs07 => b(GeoLevel::Icb, 400.0, true),
        Mhs29 => b(GeoLevel::Icb, 45_000.0, true),
        Mhs32 => b(GeoLevel::Icb, 9_000.0, true),
        Population(_) => b(GeoLevel::Icb, 75_000.0, true),
        AbsenceRate => b(GeoLevel::Icb, 0.055, false),
        CcgSpendPct => b(GeoLevel::Icb, 0.14, false),
        LocalSpend => b(GeoLevel::Icb, 2.0e6, true),
        UcasAcceptRate => b(GeoLevel::Region, 0.6, false),
        SpecialisedSpend => b(GeoLevel::Region, 8.0e6, true),
        GraduatesPer1000 => b(GeoLevel::National, 0.45, false),
        Sftn => b(GeoLevel::National, 3_000.0, true),
        Iftn => b(GeoLevel::National, 1_200.0, true),
        TotalSpend => b(GeoLevel::National, 1.2e9, true),
    }
}

fn level_of(v: VariableId) -> GeoLevel {
    base_level(v).map_or(GeoLevel::Icb, |b| b.level)
}

/// Deterministic profile of one series: level x (1 + drift + season + noise).
struct Profile {
    level: f64,
    slope: f64,
    phase: f64,
    /// AR(1) noise indexed from `first` months relative to span start.
    noise: Vec<f64>,
    first: i32,
    mid: f64,
    season: f64,
}

impl Profile {
    fn draw(rng: &mut ChaCha8Rng, level: f64, cfg: &SynthConfig, first: i32, last: i32) -> Self {
        let months = cfg.months as f64;
        let slope = cfg.trend_amplitude / months * rng.random_range(0.25..1.5);
        let phase = rng.random_range(0.0..2.0 * PI);
        let phi: f64 = 0.5;
        let innovation = cfg.noise_amplitude * (1.0 - phi * phi).sqrt();
        let mut noise = Vec::with_capacity((last - first + 1) as usize);
        let mut state = cfg.noise_amplitude * rng.sample::<f64, _>(StandardNormal);
        for _ in first..=last {
            noise.push(state);
            state = phi * state + innovation * rng.sample::<f64, _>(StandardNormal);
        }
        Self {
            level,
            slope,
            phase,
            noise,
            first,
            mid: (months - 1.0) / 2.0,
            season: cfg.seasonal_amplitude,
        }
    }

    fn at(&self, t: i32, month: Month, with_noise: bool) -> f64 {
        let moy = month.month_of_year() as f64;
        let mut rel = 1.0 + self.slope * (t as f64 - self.mid) + self.season * (2.0 * PI * moy / 12.0 + self.phase).sin();
        if with_noise {
            rel += self.noise[(t - self.first) as usize];
        }
        self.level * rel
    }
}

fn finish(v: VariableId, x: f64) -> f64 {
    let x = if v.is_rate() { x.clamp(0.0, 1.0) } else { x.max(0.0) };
    if v.is_count() {
        x.round()
    } else {
        x
    }
}

/// Generate the synthetic panel for `seed`.
pub fn synth_generate(seed: u64, cfg: &SynthConfig) -> Result<PanelDataset> {
    synth_bundle(seed, cfg, 0).map(|o| o.panel)
}

/// Generate hierarchy, native-frequency sources, the monthly panel and a
/// population projection of `projection_months` beyond the span.
pub fn synth_bundle(seed: u64, cfg: &SynthConfig, projection_months: usize) -> Result<SynthOutput> {
    cfg.validate()?;
    let hierarchy = GeoHierarchy::synthetic(&cfg.icbs_per_region)?;
    let span = cfg.span()?;
    let n = cfg.months as i32;
    // noise is drawn from a year before the span (burn-in for lags and for
    // calendar periods that start before it) to the end of the projection
    let first = -(span.start.month_of_year() as i32) - 12;
    let last = n + projection_months as i32 + 12;
    let mut rng = rng(seed);

    let icbs: Vec<String> = hierarchy.icbs().iter().map(|n| n.id.clone()).collect();
    let mut size: BTreeMap<String, f64> = BTreeMap::new();
    for id in &icbs {
        size.insert(id.clone(), (0.35 * rng.sample::<f64, _>(StandardNormal)).exp());
    }
    for r in hierarchy.regions() {
        let s = hierarchy.children(&r.id).iter().map(|c| size[c]).sum();
        size.insert(r.id.clone(), s);
    }
    let national = hierarchy.national().id.clone();
    let total: f64 = icbs.iter().map(|c| size[c]).sum();
    size.insert(national.clone(), total);

    // profiles for every exogenous variable at its level
    let mut profiles: BTreeMap<(String, VariableId), Profile> = BTreeMap::new();
    for v in VariableId::roster() {
        let Some(base) = base_level(v) else { continue };
        for node in hierarchy.at_level(base.level) {
            let jitter = (0.15 * rng.sample::<f64, _>(StandardNormal)).exp();
            let level = if base.scales_with_size {
                base.value * size[&node.id] * jitter
            } else {
                base.value * jitter.sqrt()
            };
            profiles.insert((node.id.clone(), v), Profile::draw(&mut rng, level, cfg, first, last));
        }
    }

    let month_at = |t: i32| span.start.offset(t);
    let exo = |node: &str, v: VariableId, t: i32, noise: bool| -> f64 {
        let p = &profiles[&(node.to_string(), v)];
        finish(v, p.at(t, month_at(t), noise))
    };

    // headcount and the flows that scale with it
    let couplings: Vec<(VariableId, usize, f64)> = cfg
        .couplings
        .iter()
        .map(|c| {
            let b = base_level(c.predictor).expect("validated").value;
            (c.predictor, c.lag, c.weight * cfg.headcount_scale / b)
        })
        .collect();
    let coupled: f64 = cfg.couplings.iter().map(|c| c.weight).sum();
    let mut monthly: BTreeMap<(String, VariableId), BTreeMap<i32, f64>> = BTreeMap::new();
    for id in &icbs {
        let baseline = (1.0 - coupled) * cfg.headcount_scale * size[id];
        let mut head = BTreeMap::new();
        let mut leavers = BTreeMap::new();
        let mut joiners = BTreeMap::new();
        let mut intl = BTreeMap::new();
        for t in first + 12..=last - 12 {
            let mut h = baseline;
            for &(v, lag, gamma) in &couplings {
                h += gamma * exo(id, v, t - lag as i32, true);
            }
            h += cfg.headcount_noise * cfg.headcount_scale * size[id] * rng.sample::<f64, _>(StandardNormal);
            let h = finish(VariableId::Headcount, h);
            let leave_rate = 0.0105 + 0.0008 * rng.sample::<f64, _>(StandardNormal);
            let join_rate = 0.0112 + 0.0008 * rng.sample::<f64, _>(StandardNormal);
            head.insert(t, h);
            leavers.insert(t, finish(VariableId::Leavers, h * leave_rate));
            joiners.insert(t, finish(VariableId::Joiners, h * join_rate));
            intl.insert(t, finish(VariableId::IntlJoiners, h * join_rate * 0.08));
        }
        let vac_profile = Profile::draw(&mut rng, 0.1 * cfg.headcount_scale * size[id], cfg, first, last);
        let vac: BTreeMap<i32, f64> = (first..=last)
            .map(|t| (t, finish(VariableId::Vacancies, vac_profile.at(t, month_at(t), true))))
            .collect();
        monthly.insert((id.clone(), VariableId::Headcount), head);
        monthly.insert((id.clone(), VariableId::Leavers), leavers);
        monthly.insert((id.clone(), VariableId::Joiners), joiners);
        monthly.insert((id.clone(), VariableId::IntlJoiners), intl);
        monthly.insert((id.clone(), VariableId::Vacancies), vac);
    }
    for ((node, v), _) in &profiles {
        let series = (first..=last).map(|t| (t, exo(node, *v, t, true))).collect();
        monthly.insert((node.clone(), *v), series);
    }

    // native-frequency source tables
    let mut sources = Vec::new();
    for v in VariableId::roster() {
        let level = level_of(v);
        let mut rows = Vec::new();
        for node in hierarchy.at_level(level) {
            let series = &monthly[&(node.id.clone(), v)];
            for period in periods_covering(span, v.frequency()) {
                let value: f64 = period
                    .months()
                    .iter()
                    .map(|m| series[&(m.0 - span.start.0)])
                    .sum();
                rows.push((node.id.clone(), period, value));
            }
        }
        sources.push(SourceTable {
            label: format!("{}.csv", v.code().to_lowercase()),
            variable: v,
            frequency: v.frequency(),
            level,
            rows,
        });
    }
    let panel = assemble_panel(&sources, &hierarchy, Some(span))?;

    let mut projection = PanelDataset::new(MonthSpan::new(span.end().next(), projection_months));
    if projection_months > 0 {
        let future = projection.span();
        for v in VariableId::roster().into_iter().filter(|v| v.is_population()) {
            for id in &icbs {
                let p = &profiles[&(id.clone(), v)];
                let mut annual = Vec::new();
                for period in periods_covering(future, Frequency::Annual) {
                    let total: f64 = period
                        .months()
                        .iter()
                        .map(|m| finish(v, p.at(m.0 - span.start.0, *m, false)))
                        .sum();
                    annual.push((period, total));
                }
                let values: BTreeMap<Month, f64> = disaggregate(Frequency::Annual, &annual)?.into_iter().collect();
                projection.insert(id.clone(), v, future.months().map(|m| values[&m]).collect())?;
            }
        }
    }

    Ok(SynthOutput {
        hierarchy,
        sources,
        panel,
        projection,
    })
}

fn periods_covering(span: MonthSpan, frequency: Frequency) -> Vec<Period> {
    let mut out: Vec<Period> = Vec::new();
    for m in span.months() {
        let p = match frequency {
            Frequency::Monthly => Period::Month(m),
            Frequency::Quarterly => Period::Quarter {
                year: m.year(),
                quarter: m.quarter(),
            },
            Frequency::Annual => Period::Year(m.year()),
        };
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}
