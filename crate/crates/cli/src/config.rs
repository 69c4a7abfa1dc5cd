//! JSON experiment configuration and its resolution into learner hyperparameters.

use std::path::{Path, PathBuf};

use oraclepriv::dists::{BaseDist, LabelModel, SmoothTarget};
use oraclepriv::learners::{hyperparams_calc, Hyperparams, RrspmNoise, Theorem, TheoremArgs};
use oraclepriv::mech::{calibrate_gamma, NoiseSpec, PrivacyBudget};
use oraclepriv::oracle::{LossKind, SolverOptions};
use oraclepriv::{ClassKind, FunctionClassDesc};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "ORACLEPRIV_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ftpl,
    FtrlGaussian,
    FtrlLaplace,
    RrspmLaplace,
    RrspmGaussian,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ftpl => "ftpl",
            Algorithm::FtrlGaussian => "ftrl_gaussian",
            Algorithm::FtrlLaplace => "ftrl_laplace",
            Algorithm::RrspmLaplace => "rrspm_laplace",
            Algorithm::RrspmGaussian => "rrspm_gaussian",
        }
    }

    pub fn is_rrspm(self) -> bool {
        matches!(self, Algorithm::RrspmLaplace | Algorithm::RrspmGaussian)
    }

    /// Output perturbation noise of the convex learners.
    pub fn noise_spec(self) -> NoiseSpec {
        match self {
            Algorithm::FtrlLaplace => NoiseSpec::LaplaceStd,
            _ => NoiseSpec::GaussianStd,
        }
    }
}

/// Reweighting of the base distribution; the base itself comes from the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default)]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaKeyword {
    Calibrate,
}

/// A fixed noise scale, or `"calibrate"` to solve the stability calculus for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Value(f64),
    Keyword(GammaKeyword),
}

/// Explicit hyperparameters, theorem-derived ones, or theorem-derived with overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparamSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem: Option<Theorem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaSpec>,
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

pub const SWEEP_PARAMETERS: [&str; 7] = ["n", "m", "eta", "gamma", "J", "epsilon", "delta"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairChoice {
    /// Replace one element by a fresh draw from the target.
    Random,
    /// Exhaustive search over a candidate grid for the most disruptive replacement.
    WorstCase,
}

/// Settings of the audit subcommand. Unset sizes fall back to the resolved hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSettings {
    pub instances: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Budget the audited mechanism is calibrated to, when it differs from the audited one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_epsilon: Option<f64>,
    pub rho_grid: Vec<f64>,
    pub kappa_samples: usize,
    pub complexity_paths: usize,
    pub bins: usize,
    pub min_count: u64,
    pub beta: f64,
    pub pair: PairChoice,
    /// Noise draws per candidate when searching the rounded separator's worst case.
    pub pilot_trials: usize,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            instances: 5,
            trials: None,
            n: None,
            m: None,
            eta: None,
            epsilon: None,
            delta: None,
            calibration_epsilon: None,
            rho_grid: vec![0.3, 0.5, 0.8],
            kappa_samples: 1000,
            complexity_paths: 1000,
            bins: 8,
            min_count: 100,
            beta: 0.05,
            pair: PairChoice::WorstCase,
            pilot_trials: 100_000,
        }
    }
}

fn default_trials() -> usize {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_loss() -> LossKind {
    LossKind::Absolute
}
fn default_test_n() -> usize {
    2000
}
fn default_tolerance() -> f64 {
    1e-6
}
fn default_c() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub class: FunctionClassDesc,
    pub base: BaseDist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    pub labels: LabelModel,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    pub hyperparams: HyperparamSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Size of the held-out sample for excess risk.
    #[serde(default = "default_test_n")]
    pub test_n: usize,
    /// Fraction of the public sample made of anchor points.
    #[serde(default)]
    pub anchor_fraction: f64,
    #[serde(default = "default_tolerance")]
    pub solver_tolerance: f64,
    /// Constant in the Gaussian weight scale of the rounded separator learner.
    #[serde(default = "default_c")]
    pub rrspm_gaussian_c: f64,
    #[serde(default)]
    pub audit: AuditSettings,
}

fn field(name: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("field `{name}`: {reason}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(field("schema_version", format!("expected {SCHEMA_VERSION}, found {}", self.schema_version)));
        }
        if self.trials == 0 {
            return Err(field("trials", "must be at least 1"));
        }
        if self.test_n == 0 {
            return Err(field("test_n", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.anchor_fraction) {
            return Err(field("anchor_fraction", "must lie in [0, 1)"));
        }
        if !(self.solver_tolerance > 0.0 && self.solver_tolerance.is_finite()) {
            return Err(field("solver_tolerance", "must be positive"));
        }
        if !(self.rrspm_gaussian_c > 0.0 && self.rrspm_gaussian_c.is_finite()) {
            return Err(field("rrspm_gaussian_c", "must be positive"));
        }
        self.base.validate().map_err(|e| field("base", e))?;
        if self.base.dim() != self.class.dim {
            return Err(field(
                "base",
                format!("dimension {} does not match class dimension {}", self.base.dim(), self.class.dim),
            ));
        }
        self.labels.validate().map_err(|e| field("labels", e))?;
        if !self.labels.compatible_with(&self.class) {
            return Err(field("labels", "label model does not match the class output range"));
        }
        self.target().map_err(|e| field("target", e))?;
        if self.algorithm.is_rrspm() {
            if !matches!(self.class.kind, ClassKind::Threshold1d | ClassKind::Halfspace) {
                return Err(field("class", "rrspm learners need threshold1d or halfspace"));
            }
            if self.anchor_fraction > 0.0 {
                return Err(field("anchor_fraction", "rrspm learners take unanchored public samples"));
            }
        } else {
            if self.class.kind != ClassKind::LinearBall {
                return Err(field("class", format!("{} needs linear_ball", self.algorithm.name())));
            }
            if !self.loss.is_convex() {
                return Err(field("loss", format!("{} needs a convex loss", self.algorithm.name())));
            }
        }
        if let Some(s) = &self.sweep {
            if !SWEEP_PARAMETERS.contains(&s.parameter.as_str()) {
                return Err(field(
                    "sweep.parameter",
                    format!("`{}` is not one of {}", s.parameter, SWEEP_PARAMETERS.join(", ")),
                ));
            }
            if s.values.is_empty() {
                return Err(field("sweep.values", "must list at least one value"));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(field("sweep.values", "must be finite"));
            }
        }
        for i in 0..self.sweep_len() {
            self.resolve(i)?;
        }
        let a = &self.audit;
        if a.instances == 0 {
            return Err(field("audit.instances", "must be at least 1"));
        }
        if a.bins == 0 {
            return Err(field("audit.bins", "must be at least 1"));
        }
        if !(a.beta > 0.0 && a.beta < 1.0) {
            return Err(field("audit.beta", "must lie in (0, 1)"));
        }
        if a.rho_grid.iter().any(|r| !(*r > 0.0)) {
            return Err(field("audit.rho_grid", "must be positive"));
        }
        if a.pilot_trials == 0 {
            return Err(field("audit.pilot_trials", "must be at least 1"));
        }
        Ok(())
    }

    pub fn target(&self) -> oraclepriv::Result<SmoothTarget> {
        match &self.target {
            None => SmoothTarget::uniform(self.base.clone()),
            Some(t) => SmoothTarget::new(
                self.base.clone(),
                t.breakpoints.clone().unwrap_or_else(|| vec![0.0, 1.0]),
                t.weights.clone().unwrap_or_else(|| vec![1.0]),
                t.sigma,
            ),
        }
    }

    pub fn sweep_len(&self) -> usize {
        self.sweep.as_ref().map_or(1, |s| s.values.len())
    }

    /// Value of the sweep axis at `index`, if any.
    pub fn sweep_value(&self, index: usize) -> Option<(&str, f64)> {
        self.sweep.as_ref().map(|s| (s.parameter.as_str(), s.values[index]))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.solver_tolerance,
            ..SolverOptions::default()
        }
    }

    pub fn rrspm_noise(&self) -> RrspmNoise {
        match self.algorithm {
            Algorithm::RrspmGaussian => RrspmNoise::Gaussian {
                c: self.rrspm_gaussian_c,
            },
            _ => RrspmNoise::Laplace,
        }
    }

    /// Hyperparameters at one point of the sweep.
    pub fn resolve(&self, sweep_index: usize) -> CliResult<Hyperparams> {
        let mut spec = self.hyperparams.clone();
        if let Some((name, v)) = self.sweep_value(sweep_index) {
            let count = |v: f64| -> CliResult<usize> {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(field("sweep.values", format!("`{name}` needs positive integers, found {v}")))
                }
            };
            match name {
                "n" => spec.n = Some(count(v)?),
                "m" => spec.m = Some(count(v)?),
                "J" => spec.j = Some(count(v)?),
                "eta" => spec.eta = Some(v),
                "gamma" => spec.gamma = Some(GammaSpec::Value(v)),
                "epsilon" => spec.epsilon = Some(v),
                "delta" => spec.delta = Some(v),
                _ => unreachable!("sweep parameter validated"),
            }
        }
        resolve_spec(&spec, self)
    }
}

fn resolve_spec(spec: &HyperparamSpec, cfg: &ExperimentConfig) -> CliResult<Hyperparams> {
    let algo = cfg.algorithm;
    let sigma = cfg.target().map(|t| t.sigma()).unwrap_or(1.0);
    let mut hp = match spec.theorem {
        Some(theorem) => {
            let expected = match algo {
                Algorithm::Ftpl => Theorem::GeneralFull,
                Algorithm::FtrlGaussian => Theorem::FtrlFullGaussian,
                Algorithm::FtrlLaplace => Theorem::FtrlFullLaplace,
                Algorithm::RrspmLaplace => Theorem::RrspmPure,
                Algorithm::RrspmGaussian => Theorem::RrspmApprox,
            };
            if theorem != expected {
                return Err(field(
                    "hyperparams.theorem",
                    format!("{} takes {:?}, found {theorem:?}", algo.name(), expected),
                ));
            }
            let args = TheoremArgs {
                alpha: spec.alpha.ok_or_else(|| field("hyperparams.alpha", "required with a theorem"))?,
                beta: spec.beta.unwrap_or(0.05),
                epsilon: spec.epsilon.ok_or_else(|| field("hyperparams.epsilon", "required"))?,
                delta: spec.delta.unwrap_or(0.0),
                sigma,
                lambda: spec.lambda.unwrap_or(1.0),
                d: spec.d.unwrap_or(cfg.class.vc_dimension() as f64),
                constant: spec.constant.unwrap_or(1.0),
            };
            let mut hp = hyperparams_calc(theorem, &args).map_err(|e| field("hyperparams", e))?;
            hp.n = spec.n.unwrap_or(hp.n);
            hp.m = spec.m.unwrap_or(hp.m);
            hp.eta = spec.eta.unwrap_or(hp.eta);
            hp.j = spec.j.unwrap_or(hp.j);
            hp
        }
        None => {
            let epsilon = spec.epsilon.ok_or_else(|| field("hyperparams.epsilon", "required"))?;
            let delta = spec.delta.unwrap_or(0.0);
            Hyperparams {
                n: spec.n.ok_or_else(|| field("hyperparams.n", "required without a theorem"))?,
                m: spec.m.ok_or_else(|| field("hyperparams.m", "required without a theorem"))?,
                eta: match (algo.is_rrspm(), spec.eta) {
                    (true, e) => e.unwrap_or(0.0),
                    (false, Some(e)) => e,
                    (false, None) => return Err(field("hyperparams.eta", format!("required for {}", algo.name()))),
                },
                j: spec.j.unwrap_or(1),
                budget: PrivacyBudget::new(epsilon, delta).map_err(|e| field("hyperparams", e))?,
                sigma,
                ..Hyperparams::default()
            }
        }
    };
    hp.budget = PrivacyBudget::new(hp.budget.epsilon, hp.budget.delta).map_err(|e| field("hyperparams", e))?;
    if hp.n == 0 {
        return Err(field("hyperparams.n", "must be at least 1"));
    }
    if hp.m == 0 {
        return Err(field("hyperparams.m", "must be at least 1"));
    }
    if hp.j == 0 {
        return Err(field("hyperparams.J", "must be at least 1"));
    }
    if algo.is_rrspm() {
        if algo == Algorithm::RrspmGaussian && !(hp.budget.delta > 0.0) {
            return Err(field("hyperparams.delta", "rrspm_gaussian needs delta > 0"));
        }
        hp.gamma = 0.0;
        return Ok(hp);
    }
    if !(hp.eta > 0.0 && hp.eta.is_finite()) {
        return Err(field("hyperparams.eta", "must be positive"));
    }
    hp.budget.check_for(algo.noise_spec()).map_err(|e| field("hyperparams.delta", e))?;
    hp.gamma = match (spec.gamma, spec.theorem, algo) {
        (Some(GammaSpec::Value(g)), _, _) => g,
        (Some(GammaSpec::Keyword(GammaKeyword::Calibrate)), _, Algorithm::Ftpl) => {
            return Err(field("hyperparams.gamma", "ftpl has no closed-form stability to calibrate against"))
        }
        (Some(GammaSpec::Keyword(GammaKeyword::Calibrate)), _, _) | (None, None, _) if algo != Algorithm::Ftpl => {
            ftrl_gamma(&hp, algo)?
        }
        (None, Some(_), _) => hp.gamma,
        _ => return Err(field("hyperparams.gamma", "required for ftpl")),
    };
    if !(hp.gamma >= 0.0 && hp.gamma.is_finite()) {
        return Err(field("hyperparams.gamma", "must be finite and nonnegative"));
    }
    Ok(hp)
}

/// Noise scale at which the regularized learner meets its budget, from its stability `2 / sqrt(eta n)`.
pub fn ftrl_gamma(hp: &Hyperparams, algo: Algorithm) -> CliResult<f64> {
    let rho = 2.0 / (hp.eta * hp.n as f64).sqrt();
    calibrate_gamma(hp.m, rho, hp.budget.epsilon, hp.budget.delta, algo.noise_spec()).map_err(|e| field("hyperparams.gamma", e))
}

/// Master seed: the command-line override, then the config, then the environment.
pub fn master_seed(flag: Option<u64>, cfg: &ExperimentConfig) -> CliResult<u64> {
    if let Some(s) = flag.or(cfg.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}=`{v}` is not a 64-bit unsigned integer"))),
        Err(_) => Err(field("seed", format!("missing; set it in the config, pass --seed, or export {SEED_ENV}"))),
    }
}
