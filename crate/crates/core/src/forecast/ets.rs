use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::path::{ForecastPath, ModelFamily, ModelSpec};
use super::sim::{aic, mse_floor, path_quantiles};
use crate::calendar::Month;
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::stats::{mean, rng};

/// Additive-error ETS forms, named trend x season.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EtsForm {
    NN,
    AN,
    AdN,
    NA,
    AA,
}

impl EtsForm {
    pub const ALL: [EtsForm; 5] = [EtsForm::NN, EtsForm::AN, EtsForm::AdN, EtsForm::NA, EtsForm::AA];

    fn trend(self) -> bool {
        matches!(self, EtsForm::AN | EtsForm::AdN | EtsForm::AA)
    }

    fn damped(self) -> bool {
        self == EtsForm::AdN
    }

    fn seasonal(self) -> bool {
        matches!(self, EtsForm::NA | EtsForm::AA)
    }

    /// Smoothing parameters plus free initial states (seasonal states sum to zero).
    pub fn k(self, m: usize) -> usize {
        let smoothing = 1 + usize::from(self.trend()) + usize::from(self.damped()) + usize::from(self.seasonal());
        let states = 1 + usize::from(self.trend()) + if self.seasonal() { m - 1 } else { 0 };
        smoothing + states
    }

    pub fn code(self) -> &'static str {
        match self {
            EtsForm::NN => "A,N,N",
            EtsForm::AN => "A,A,N",
            EtsForm::AdN => "A,Ad,N",
            EtsForm::NA => "A,N,A",
            EtsForm::AA => "A,A,A",
        }
    }
}

const PARAM_LO: f64 = 1e-4;
const PARAM_HI: f64 = 0.9999;
const PHI_LO: f64 = 0.8;
const PHI_HI: f64 = 0.98;

fn squash(u: f64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) / (1.0 + (-u).exp())
}

fn unsquash(x: f64, lo: f64, hi: f64) -> f64 {
    let p = ((x - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtsState {
    pub level: f64,
    pub trend: f64,
    /// Seasonal states, oldest first; `season[0]` applies to the next step.
    pub season: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtsFit {
    pub form: EtsForm,
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub phi: f64,
    pub initial: EtsState,
    /// State after the last observation.
    pub last: EtsState,
    pub sse: f64,
    pub n: usize,
    pub k: usize,
    pub aic: f64,
    pub sigma: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy)]
struct Params {
    alpha: f64,
    beta: f64,
    gamma: f64,
    phi: f64,
}

fn initial_state(y: &[f64], form: EtsForm, m: usize) -> EtsState {
    let n = y.len();
    if form.seasonal() {
        let first = mean(&y[..m]);
        let second = if n >= 2 * m { mean(&y[m..2 * m]) } else { first };
        let slope = if form.trend() { (second - first) / m as f64 } else { 0.0 };
        let seasons = (n / m).min(2);
        let mut season = vec![0.0; m];
        for k in 0..seasons {
            let block = &y[k * m..(k + 1) * m];
            let centre = mean(block);
            for (j, v) in block.iter().enumerate() {
                season[j] += (v - centre - slope * (j as f64 - (m as f64 - 1.0) / 2.0)) / seasons as f64;
            }
        }
        let c = mean(&season);
        season.iter_mut().for_each(|s| *s -= c);
        // level sits just before the first observation
        let level = first - slope * ((m as f64 + 1.0) / 2.0);
        EtsState { level, trend: slope, season }
    } else if form.trend() {
        // least-squares line through the first few points
        let k = n.min(10);
        let t: Vec<f64> = (1..=k).map(|i| i as f64).collect();
        let (tm, ym) = (mean(&t), mean(&y[..k]));
        let sxx: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
        let slope = if sxx > 0.0 {
            t.iter().zip(&y[..k]).map(|(a, b)| (a - tm) * (b - ym)).sum::<f64>() / sxx
        } else {
            0.0
        };
        EtsState {
            level: ym - slope * tm,
            trend: slope,
            season: vec![],
        }
    } else {
        EtsState {
            level: y[0],
            trend: 0.0,
            season: vec![],
        }
    }
}

fn step(form: EtsForm, p: Params, s: &mut EtsState, e: f64) {
    let (l, b) = (s.level, s.trend);
    let damp = if form.damped() { p.phi } else { 1.0 };
    if form.trend() {
        s.level = l + damp * b + p.alpha * e;
        s.trend = damp * b + p.beta * e;
    } else {
        s.level = l + p.alpha * e;
    }
    if form.seasonal() {
        let old = s.season.remove(0);
        s.season.push(old + p.gamma * e);
    }
}

fn one_step(form: EtsForm, p: Params, s: &EtsState) -> f64 {
    let damp = if form.damped() { p.phi } else { 1.0 };
    let mut f = s.level;
    if form.trend() {
        f += damp * s.trend;
    }
    if form.seasonal() {
        f += s.season[0];
    }
    f
}

fn run(y: &[f64], form: EtsForm, p: Params, init: &EtsState) -> (f64, EtsState) {
    let mut s = init.clone();
    let mut sse = 0.0;
    for &v in y {
        let e = v - one_step(form, p, &s);
        sse += e * e;
        step(form, p, &mut s, e);
    }
    (sse, s)
}

fn decode(form: EtsForm, u: &[f64]) -> Params {
    let mut it = u.iter();
    let mut next = |lo, hi| it.next().map_or(0.0, |&v| squash(v, lo, hi));
    let alpha = next(PARAM_LO, PARAM_HI);
    let beta = if form.trend() { next(PARAM_LO, PARAM_HI) } else { 0.0 };
    let gamma = if form.seasonal() { next(PARAM_LO, PARAM_HI) } else { 0.0 };
    let phi = if form.damped() { next(PHI_LO, PHI_HI) } else { 1.0 };
    Params { alpha, beta, gamma, phi }
}

fn start(form: EtsForm, alpha: f64) -> Vec<f64> {
    let mut u = vec![unsquash(alpha, PARAM_LO, PARAM_HI)];
    if form.trend() {
        u.push(unsquash(0.05, PARAM_LO, PARAM_HI));
    }
    if form.seasonal() {
        u.push(unsquash(0.05, PARAM_LO, PARAM_HI));
    }
    if form.damped() {
        u.push(unsquash(0.95, PHI_LO, PHI_HI));
    }
    u
}

fn finish(y: &[f64], form: EtsForm, m: usize, p: Params, init: EtsState, fallback: bool) -> EtsFit {
    let (sse, last) = run(y, form, p, &init);
    let n = y.len();
    let k = form.k(m);
    EtsFit {
        form,
        m,
        alpha: p.alpha,
        beta: p.beta,
        gamma: p.gamma,
        phi: p.phi,
        initial: init,
        last,
        sse,
        n,
        k,
        aic: aic(sse, n, k, mse_floor(y)),
        sigma: (sse / n as f64).sqrt(),
        fallback,
    }
}

/// Fits one ETS form by minimising one-step SSE over bounded parameters.
pub fn fit_ets(y: &[f64], form: EtsForm, m: usize) -> Result<EtsFit> {
    let needed = if form.seasonal() { 2 * m } else { 8 };
    if y.len() < needed {
        return Err(Error::SeriesTooShort { needed, got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("non-finite value in ETS input".into()));
    }
    let init = initial_state(y, form, m);
    let objective = |u: &[f64]| run(y, form, decode(form, u), &init).0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for a0 in [0.2, 0.7] {
        let r = nelder_mead(objective, &start(form, a0), NelderMeadOptions::default());
        // restart from the optimum to escape a collapsed simplex
        let r = nelder_mead(objective, &r.x, NelderMeadOptions::default());
        if r.value.is_finite() && best.as_ref().is_none_or(|(v, _)| r.value < *v) {
            best = Some((r.value, r.x));
        }
    }
    let (_, u) = best.ok_or_else(|| Error::ModelFit(format!("ETS({}) optimisation diverged", form.code())))?;
    Ok(finish(y, form, m, decode(form, &u), init, false))
}

/// Every admissible candidate, in the fixed order NN, AN, AdN, NA, AA.
pub fn ets_candidates(y: &[f64], m: usize) -> Result<Vec<EtsFit>> {
    if y.len() < 8 {
        return Err(Error::SeriesTooShort { needed: 8, got: y.len() });
    }
    Ok(EtsForm::ALL
        .into_iter()
        .filter(|f| !f.seasonal() || y.len() >= 2 * m)
        .filter_map(|f| fit_ets(y, f, m).ok())
        .collect())
}

/// Lowest-AIC candidate; ties go to the earlier (simpler) form.
pub fn select_ets(y: &[f64], m: usize) -> Result<EtsFit> {
    let cands = ets_candidates(y, m)?;
    let best = cands
        .into_iter()
        .filter(|c| c.aic.is_finite())
        .fold(None::<EtsFit>, |acc, c| match acc {
            Some(a) if a.aic <= c.aic => Some(a),
            _ => Some(c),
        });
    match best {
        Some(b) => Ok(b),
        None => {
            let p = Params {
                alpha: 0.5,
                beta: 0.1,
                gamma: 0.0,
                phi: 1.0,
            };
            Ok(finish(y, EtsForm::AN, m, p, initial_state(y, EtsForm::AN, m), true))
        }
    }
}

impl EtsFit {
    fn params(&self) -> Params {
        Params {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            phi: self.phi,
        }
    }

    pub fn point(&self, h: usize) -> Vec<f64> {
        let p = self.params();
        let mut s = self.last.clone();
        (0..h)
            .map(|_| {
                let f = one_step(self.form, p, &s);
                step(self.form, p, &mut s, 0.0);
                f
            })
            .collect()
    }

    pub fn simulate(&self, h: usize, n_paths: usize, seed: u64) -> Vec<Vec<f64>> {
        let p = self.params();
        let mut r = rng(seed);
        (0..n_paths)
            .map(|_| {
                let mut s = self.last.clone();
                (0..h)
                    .map(|_| {
                        let e = self.sigma * r.sample::<f64, _>(StandardNormal);
                        let f = one_step(self.form, p, &s) + e;
                        step(self.form, p, &mut s, e);
                        f
                    })
                    .collect()
            })
            .collect()
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(ModelFamily::Ets)
            .with("form", self.form.code())
            .with("alpha", self.alpha)
            .with("beta", self.beta)
            .with("gamma", self.gamma)
            .with("phi", self.phi)
            .with("aic", self.aic)
    }

    pub fn forecast(&self, node: &str, origin: Month, h: usize, n_paths: usize, seed: u64) -> Result<ForecastPath> {
        let point = self.point(h);
        let (lo, hi) = path_quantiles(&self.simulate(h, n_paths, seed), h);
        let mut path = ForecastPath::new(node, self.spec(), origin, point, lo, hi)?;
        if self.fallback {
            path = path.flag("fallback");
        }
        if self.sigma == 0.0 {
            path = path.flag("degenerate_interval");
        }
        Ok(path)
    }
}

pub fn auto_ets(node: &str, origin: Month, y: &[f64], h: usize, m: usize, seed: u64) -> Result<(EtsFit, ForecastPath)> {
    let fit = select_ets(y, m)?;
    let path = fit.forecast(node, origin, h, 1000, seed)?;
    Ok((fit, path))
}
