//! Configuration-driven experiment runner for `oraclepriv`: learning-curve
//! sweeps, audits, CSV reports and SVG plots.

pub mod audits;
pub mod config;
pub mod error;
pub mod output;
pub mod params;
pub mod plot;
pub mod run;

pub use error::{CliError, CliResult};
