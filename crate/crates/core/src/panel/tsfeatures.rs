//! Trend and seasonal strength from a classical additive decomposition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::variance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsFeatureSet {
    pub trend_strength: f64,
    pub seasonal_strength: f64,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Centred moving average; `None` at the edges where the window does not fit.
    pub trend: Vec<Option<f64>>,
    pub seasonal: Vec<f64>,
    pub remainder: Vec<Option<f64>>,
}

/// Classical additive decomposition with period `m`.
pub fn decompose(y: &[f64], m: usize) -> Result<Decomposition> {
    if m < 2 {
        return Err(Error::InvalidInput(format!("period must be at least 2, got {m}")));
    }
    if y.len() < 2 * m {
        return Err(Error::SeriesTooShort {
            needed: 2 * m,
            got: y.len(),
        });
    }
    let n = y.len();
    let half = m / 2;
    let mut trend = vec![None; n];
    for t in half..n - half {
        let v = if m % 2 == 0 {
            // 2 x m moving average
            let inner: f64 = y[t + 1 - half..t + half].iter().sum();
            (0.5 * y[t - half] + inner + 0.5 * y[t + half]) / m as f64
        } else {
            y[t - half..=t + half].iter().sum::<f64>() / m as f64
        };
        trend[t] = Some(v);
    }

    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for t in 0..n {
        if let Some(tr) = trend[t] {
            sums[t % m] += y[t] - tr;
            counts[t % m] += 1;
        }
    }
    let mut index: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let centre = index.iter().sum::<f64>() / m as f64;
    for v in &mut index {
        *v -= centre;
    }
    let seasonal: Vec<f64> = (0..n).map(|t| index[t % m]).collect();
    let remainder = (0..n)
        .map(|t| trend[t].map(|tr| y[t] - tr - seasonal[t]))
        .collect();
    Ok(Decomposition {
        trend,
        seasonal,
        remainder,
    })
}

fn strength(remainder: &[f64], signal_plus_remainder: &[f64]) -> f64 {
    let denom = variance(signal_plus_remainder);
    // A flat component carries no strength; also covers the 0/0 case.
    if denom <= f64::EPSILON * f64::EPSILON || !denom.is_finite() {
        return 0.0;
    }
    (1.0 - variance(remainder) / denom).clamp(0.0, 1.0)
}

pub fn ts_features(y: &[f64], m: usize) -> Result<TsFeatureSet> {
    let d = decompose(y, m)?;
    let mut r = Vec::new();
    let mut tr = Vec::new();
    let mut sr = Vec::new();
    for t in 0..y.len() {
        if let (Some(trend), Some(rem)) = (d.trend[t], d.remainder[t]) {
            r.push(rem);
            tr.push(trend + rem);
            sr.push(d.seasonal[t] + rem);
        }
    }
    // Relative guard so near-zero remainders from rounding do not count as
    // signal when the whole component is numerically flat.
    let scale = variance(y).max(f64::MIN_POSITIVE);
    let rel = |xs: &[f64]| xs.iter().map(|x| x / scale.sqrt()).collect::<Vec<_>>();
    Ok(TsFeatureSet {
        trend_strength: strength(&rel(&r), &rel(&tr)),
        seasonal_strength: strength(&rel(&r), &rel(&sr)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn ramp_is_all_trend() {
        let y: Vec<f64> = (0..60).map(|t| t as f64).collect();
        let f = ts_features(&y, 12).unwrap();
        assert!(f.trend_strength >= 0.99, "{f:?}");
        assert!(f.seasonal_strength <= 0.2, "{f:?}");
    }

    #[test]
    fn sinusoid_is_all_season() {
        let y: Vec<f64> = (0..60)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 12.0).sin())
            .collect();
        let f = ts_features(&y, 12).unwrap();
        assert!(f.seasonal_strength >= 0.99, "{f:?}");
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            ts_features(&[1.0; 23], 12),
            Err(Error::SeriesTooShort { needed: 24, got: 23 })
        ));
    }

    #[test]
    fn constant_series_has_no_strength() {
        let f = ts_features(&[5.0; 36], 12).unwrap();
        assert_eq!(f.trend_strength, 0.0);
        assert_eq!(f.seasonal_strength, 0.0);
    }

    #[test]
    fn white_noise_is_weak() {
        // Monte-Carlo over 100 seeded draws of length 120.
        let mut worst: f64 = 0.0;
        for seed in 0..100u64 {
            let mut rng = crate::stats::rng(seed);
            let y: Vec<f64> = (0..120).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let f = ts_features(&y, 12).unwrap();
            worst = worst.max(f.trend_strength).max(f.seasonal_strength);
        }
        assert!(worst < 0.3, "worst strength {worst}");
    }

    #[test]
    fn odd_period_decomposition() {
        let y: Vec<f64> = (0..30).map(|t| [1.0, -1.0, 0.0][t % 3] + 0.5 * t as f64).collect();
        let f = ts_features(&y, 3).unwrap();
        assert!(f.trend_strength > 0.99);
        assert!(f.seasonal_strength > 0.99);
    }
}
