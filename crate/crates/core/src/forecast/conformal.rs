use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile;

pub const MIN_CALIBRATION_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalWidth {
    /// Half-width applied at every forecast step.
    pub width: f64,
    pub degenerate: bool,
}

/// Split-conformal half-width: the 95th percentile of absolute residuals on
/// calibration rows the model did not see.
pub fn conformal_interval(residuals: &[f64]) -> Result<ConformalWidth> {
    if residuals.len() < MIN_CALIBRATION_ROWS {
        return Err(Error::InvalidInput(format!(
            "conformal calibration needs at least {MIN_CALIBRATION_ROWS} rows, got {}",
            residuals.len()
        )));
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidValue("non-finite calibration residual".into()));
    }
    let abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    let width = quantile(&abs, 0.95);
    Ok(ConformalWidth {
        width,
        degenerate: width == 0.0,
    })
}
