use super::path::{ForecastPath, ModelFamily, ModelSpec};
use crate::calendar::Month;
use crate::error::{Error, Result};
use crate::stats::rms;

/// Seasonal naive: repeat the last observed season. `origin` is the month of
/// the last observation.
pub fn snaive_forecast(node: &str, origin: Month, y: &[f64], h: usize, m: usize) -> Result<ForecastPath> {
    if m == 0 || y.len() < m {
        return Err(Error::SeriesTooShort { needed: m.max(1), got: y.len() });
    }
    let t = y.len() - 1;
    let resid: Vec<f64> = (m..y.len()).map(|i| y[i] - y[i - m]).collect();
    // RMS, not centred sd: a drifting series keeps its drift in the error
    let sigma = if resid.is_empty() { 0.0 } else { rms(&resid) };
    let mut point = Vec::with_capacity(h);
    let mut lo = Vec::with_capacity(h);
    let mut hi = Vec::with_capacity(h);
    for step in 1..=h {
        let seasons = step.div_ceil(m);
        let v = y[t + step - m * seasons];
        let w = 1.96 * sigma * (seasons as f64).sqrt();
        point.push(v);
        lo.push(v - w);
        hi.push(v + w);
    }
    let spec = ModelSpec::new(ModelFamily::Snaive).with("m", m);
    let path = ForecastPath::new(node, spec, origin, point, lo, hi)?;
    Ok(if sigma == 0.0 { path.flag("degenerate_interval") } else { path })
}
