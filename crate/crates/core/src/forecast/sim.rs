use crate::stats::quantile_sorted;

/// Per-step 2.5% / 97.5% quantiles of simulated sample paths.
pub fn path_quantiles(paths: &[Vec<f64>], h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = Vec::with_capacity(h);
    let mut hi = Vec::with_capacity(h);
    let mut col = Vec::with_capacity(paths.len());
    for i in 0..h {
        col.clear();
        col.extend(paths.iter().map(|p| p[i]));
        col.sort_by(|a, b| a.total_cmp(b));
        lo.push(quantile_sorted(&col, 0.025));
        hi.push(quantile_sorted(&col, 0.975));
    }
    (lo, hi)
}

/// Floor on the mean squared error so the log in the AIC stays finite for
/// perfectly fitted series.
pub fn mse_floor(y: &[f64]) -> f64 {
    let scale = y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    (1e-10 * scale).powi(2)
}

pub fn aic(sse: f64, n: usize, k: usize, floor: f64) -> f64 {
    let n = n as f64;
    n * (sse / n).max(floor).ln() + 2.0 * k as f64
}
