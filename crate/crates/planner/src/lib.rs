//! Command-line tool, HTTP service and run store around `planner-core`.

pub mod api;
pub mod cli;
pub mod error;
pub mod sim;
pub mod store;

pub use error::{AppError, ErrorBody, Result};
