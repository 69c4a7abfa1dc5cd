//! The `params` subcommand: hyperparameters from the sample-complexity formulas.

use oraclepriv::learners::{hyperparams_calc, Hyperparams, Theorem, TheoremArgs};

use crate::error::{CliError, CliResult};

pub fn parse_theorem(s: &str) -> Result<Theorem, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        format!("unknown theorem `{s}`; expected general_full, ftrl_full_gaussian, ftrl_full_laplace, rrspm_pure or rrspm_approx")
    })
}

pub fn params(theorem: Theorem, args: &TheoremArgs) -> CliResult<Hyperparams> {
    hyperparams_calc(theorem, args).map_err(|e| CliError::Config(e.to_string()))
}

/// Pretty JSON with the theorem name attached.
pub fn params_json(theorem: Theorem, args: &TheoremArgs) -> CliResult<String> {
    let hp = params(theorem, args)?;
    let mut v = serde_json::to_value(hp).map_err(|e| CliError::Config(e.to_string()))?;
    v["theorem"] = serde_json::to_value(theorem).map_err(|e| CliError::Config(e.to_string()))?;
    serde_json::to_string_pretty(&v).map_err(|e| CliError::Config(e.to_string()))
}
