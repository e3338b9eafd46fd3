//! Feature construction and predictor selection.

pub mod ccf;
pub mod lasso;
pub mod matrix;
pub mod standardize;

pub use ccf::{ccf, screen_predictors, CcfResult, Screening};
pub use lasso::{critical_alpha, lasso_dense, lasso_fit, lasso_path, select_top_k, Coefficient, LassoOptions, LassoResult, TopK};
pub use matrix::{make_lags, FeatureContext, FeatureMatrix, FeatureSpec, RowKey};
pub use standardize::{standardize, Standardizer};
