//! Purchase-behavior analytics over e-commerce clickstreams.
//!
//! The pipeline turns raw event logs into session and user-journey feature
//! tables, clusters journeys, and measures the resulting clusters: how well
//! they are formed, how far apart their feature distributions are, and how
//! robustly their purchase labels can be recovered when labels go missing.

// Parameter checks are written as `!(x > 0.0)` on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod clustering;
pub mod error;
pub mod ingest;
pub mod journeys;
pub mod matrix;
pub mod models;
pub mod pll;
pub mod ranking;
pub mod seed;
pub mod sessions;

pub use error::{Error, Result};
pub use matrix::{ColumnScale, FeatureMatrix};
