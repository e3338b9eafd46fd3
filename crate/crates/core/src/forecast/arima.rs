use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::path::{ForecastPath, ModelFamily, ModelSpec};
use super::sim::{aic, mse_floor, path_quantiles};
use crate::calendar::Month;
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::stats::{mean, rng};

/// 5% critical value of the KPSS level-stationarity test.
pub const KPSS_CRITICAL: f64 = 0.463;
pub const MAX_P: usize = 3;
pub const MAX_Q: usize = 3;
/// First residual index counted in the SSE, shared by every candidate so
/// their AICs are comparable.
const SSE_START: usize = MAX_P;

/// KPSS level statistic with Bartlett-weighted long-run variance and
/// truncation lag floor(4 (n/100)^0.25).
pub fn kpss_level(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(y);
    let e: Vec<f64> = y.iter().map(|v| v - mu).collect();
    let nf = n as f64;
    let lags = (4.0 * (nf / 100.0).powf(0.25)).floor() as usize;
    let gamma = |j: usize| e[j..].iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / nf;
    let mut s2 = gamma(0);
    for j in 1..=lags.min(n - 1) {
        s2 += 2.0 * (1.0 - j as f64 / (lags as f64 + 1.0)) * gamma(j);
    }
    if !(s2 > 0.0) {
        return 0.0;
    }
    let mut partial = 0.0;
    let mut eta = 0.0;
    for v in &e {
        partial += v;
        eta += partial * partial;
    }
    eta / (nf * nf * s2)
}

pub fn difference(y: &[f64]) -> Vec<f64> {
    y.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Number of differences (0..=2) needed before KPSS stops rejecting.
pub fn choose_d(y: &[f64]) -> usize {
    let mut w = y.to_vec();
    let mut d = 0;
    while d < 2 && kpss_level(&w) > KPSS_CRITICAL {
        w = difference(&w);
        d += 1;
    }
    d
}

/// Partial autocorrelations to polynomial coefficients (Durbin-Levinson).
fn pacf_to_coefs(r: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(r.len());
    for (k, &rk) in r.iter().enumerate() {
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - rk * prev[k - 1 - j];
        }
        phi.push(rk);
    }
    phi
}

/// Step-down recursion: true when every partial autocorrelation of the
/// polynomial 1 - c1 z - ... lies strictly inside (-1, 1), i.e. all roots
/// are outside the unit circle.
pub fn roots_outside_unit_circle(coefs: &[f64]) -> bool {
    let mut a = coefs.to_vec();
    while let Some(&k) = a.last() {
        if !(k.abs() < 1.0 - 1e-6) {
            return false;
        }
        let p = a.len();
        let denom = 1.0 - k * k;
        let next: Vec<f64> = (0..p - 1).map(|j| (a[j] + k * a[p - 2 - j]) / denom).collect();
        a = next;
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaFit {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// Mean of the differenced series (zero when d = 2).
    pub mean: f64,
    pub sse: f64,
    pub n: usize,
    pub aic: f64,
    pub sigma: f64,
    pub fallback: bool,
    #[serde(skip)]
    history: Vec<f64>,
    #[serde(skip)]
    residuals: Vec<f64>,
}

fn css_residuals(x: &[f64], ar: &[f64], ma: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; x.len()];
    for t in 0..x.len() {
        let mut f = 0.0;
        for (i, a) in ar.iter().enumerate() {
            if t > i {
                f += a * x[t - 1 - i];
            }
        }
        for (j, b) in ma.iter().enumerate() {
            if t > j {
                f += b * e[t - 1 - j];
            }
        }
        e[t] = x[t] - f;
    }
    e
}

fn css(x: &[f64], ar: &[f64], ma: &[f64]) -> f64 {
    css_residuals(x, ar, ma)[SSE_START..].iter().map(|e| e * e).sum()
}

fn decode(u: &[f64], p: usize) -> (Vec<f64>, Vec<f64>) {
    let r: Vec<f64> = u.iter().map(|v| v.tanh()).collect();
    let ar = pacf_to_coefs(&r[..p]);
    // invertible MA via the same map applied to the negated polynomial
    let ma: Vec<f64> = pacf_to_coefs(&r[p..]).into_iter().map(|c| -c).collect();
    (ar, ma)
}

fn differenced(y: &[f64], d: usize) -> Vec<f64> {
    (0..d).fold(y.to_vec(), |w, _| difference(&w))
}

/// Fits ARIMA(p, d, q) by conditional sum of squares with a Nelder-Mead
/// search over transformed coefficients.
pub fn fit_arima(y: &[f64], order: (usize, usize, usize)) -> Result<ArimaFit> {
    let (p, d, q) = order;
    if p > MAX_P || q > MAX_Q || d > 2 {
        return Err(Error::InvalidInput(format!("ARIMA order ({p},{d},{q}) outside the search space")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("non-finite value in ARIMA input".into()));
    }
    let w = differenced(y, d);
    if w.len() <= SSE_START + p + q + 1 {
        return Err(Error::SeriesTooShort {
            needed: SSE_START + p + q + 2 + d,
            got: y.len(),
        });
    }
    let mu = if d <= 1 { mean(&w) } else { 0.0 };
    let x: Vec<f64> = w.iter().map(|v| v - mu).collect();
    let (ar, ma) = if p + q == 0 {
        (vec![], vec![])
    } else {
        let objective = |u: &[f64]| {
            let (ar, ma) = decode(u, p);
            css(&x, &ar, &ma)
        };
        let r = nelder_mead(objective, &vec![0.0; p + q], NelderMeadOptions::default());
        let r = nelder_mead(objective, &r.x, NelderMeadOptions::default());
        decode(&r.x, p)
    };
    let neg_ma: Vec<f64> = ma.iter().map(|c| -c).collect();
    let admissible = roots_outside_unit_circle(&ar) && roots_outside_unit_circle(&neg_ma);
    let residuals = css_residuals(&x, &ar, &ma);
    let sse: f64 = residuals[SSE_START..].iter().map(|e| e * e).sum();
    let n = x.len() - SSE_START;
    let score = if admissible {
        aic(sse, n, p + q + 1, mse_floor(&w))
    } else {
        f64::INFINITY
    };
    Ok(ArimaFit {
        p,
        d,
        q,
        ar,
        ma,
        mean: mu,
        sse,
        n,
        aic: score,
        sigma: (sse / n as f64).sqrt(),
        fallback: false,
        history: y.to_vec(),
        residuals,
    })
}

/// All (p, q) candidates at the chosen d, in (p, q) lexicographic order.
pub fn arima_candidates(y: &[f64]) -> Result<(usize, Vec<ArimaFit>)> {
    if y.len() < 20 {
        return Err(Error::SeriesTooShort { needed: 20, got: y.len() });
    }
    let d = choose_d(y);
    let mut out = Vec::new();
    for p in 0..=MAX_P {
        for q in 0..=MAX_Q {
            out.push(fit_arima(y, (p, d, q))?);
        }
    }
    Ok((d, out))
}

/// Lowest-AIC admissible candidate; ties go to the earlier (smaller) order.
pub fn select_arima(y: &[f64]) -> Result<ArimaFit> {
    let (d, cands) = arima_candidates(y)?;
    let best = cands
        .into_iter()
        .filter(|c| c.aic.is_finite())
        .fold(None::<ArimaFit>, |acc, c| match acc {
            Some(a) if a.aic <= c.aic => Some(a),
            _ => Some(c),
        });
    match best {
        Some(b) => Ok(b),
        None => {
            let mut f = fit_arima(y, (0, d, 0))?;
            f.fallback = true;
            Ok(f)
        }
    }
}

impl ArimaFit {
    /// Forecast of the level series, optionally with simulated shocks.
    fn project(&self, h: usize, shocks: Option<&[f64]>) -> Vec<f64> {
        let w = differenced(&self.history, self.d);
        let mut x: Vec<f64> = w.iter().map(|v| v - self.mean).collect();
        let mut e = self.residuals.clone();
        let start = x.len();
        for i in 0..h {
            let t = start + i;
            let shock = shocks.map_or(0.0, |s| s[i]);
            let mut f = shock;
            for (k, a) in self.ar.iter().enumerate() {
                f += a * x[t - 1 - k];
            }
            for (k, b) in self.ma.iter().enumerate() {
                f += b * e[t - 1 - k];
            }
            x.push(f);
            e.push(shock);
        }
        // undo the differencing
        let mut out: Vec<f64> = x[start..].iter().map(|v| v + self.mean).collect();
        for level in (0..self.d).rev() {
            let base = differenced(&self.history, level);
            let mut last = *base.last().expect("non-empty history");
            for v in &mut out {
                last += *v;
                *v = last;
            }
        }
        out
    }

    pub fn point(&self, h: usize) -> Vec<f64> {
        self.project(h, None)
    }

    pub fn simulate(&self, h: usize, n_paths: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng(seed);
        (0..n_paths)
            .map(|_| {
                let shocks: Vec<f64> = (0..h).map(|_| self.sigma * r.sample::<f64, _>(StandardNormal)).collect();
                self.project(h, Some(&shocks))
            })
            .collect()
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(ModelFamily::Arima)
            .with("p", self.p)
            .with("d", self.d)
            .with("q", self.q)
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

pub fn auto_arima(node: &str, origin: Month, y: &[f64], h: usize, seed: u64) -> Result<(ArimaFit, ForecastPath)> {
    let fit = select_arima(y)?;
    let path = fit.forecast(node, origin, h, 1000, seed)?;
    Ok((fit, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pacf_map_round_trips_through_step_down() {
        let coefs = pacf_to_coefs(&[0.5, -0.3, 0.2]);
        assert!(roots_outside_unit_circle(&coefs));
        // AR(1) with coefficient 1 is a unit root
        assert!(!roots_outside_unit_circle(&[1.0]));
        assert!(!roots_outside_unit_circle(&[0.5, 0.6]));
        assert!(roots_outside_unit_circle(&[0.5, 0.3]));
    }
}
