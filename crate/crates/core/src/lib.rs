//! Workforce supply/demand planning engine.
//!
//! The crate is organised the way a planning run flows:
//!
//! * [`panel`] owns the geographic hierarchy, the tidy monthly panel and its
//!   ingestion from mixed-frequency sources, plus a seeded synthetic generator.
//! * [`features`] builds lagged feature matrices and ranks predictors with a
//!   coordinate-descent lasso.
//! * [`forecast`] fits the per-series and global model zoo, produces 95%
//!   intervals, averages members into an ensemble and aggregates bottom-up.
//! * [`stockflow`] runs the annual stock-flow supply model under policy
//!   scenarios and compares it against forecast demand.
//! * [`pipeline`] wires the stages together for the CLI and the HTTP service.

pub mod calendar;
pub mod error;
pub mod features;
pub mod forecast;
pub mod optim;
pub mod panel;
pub mod pipeline;
pub mod stats;
pub mod stockflow;

pub use calendar::{Month, MonthSpan};
pub use error::{Error, Result};
