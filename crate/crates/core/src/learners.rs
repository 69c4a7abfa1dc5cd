//! The private learners and their hyperparameter formulas.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{evaluate_on, ClassKind, FunctionClassDesc, GpPath, LabeledDataset, Predictor, PublicSample, Task};
use crate::error::{invalid, Error, Result};
use crate::mech::{perturb_with_noise, sample_laplace, sample_noise, NoiseSpec, Perturbed, PrivacyBudget};
use crate::oracle::{erm_with, LossKind, ObjectiveSpec, SolverOptions};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub eta: f64,
    pub gamma: f64,
    pub m: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub n: usize,
    pub budget: PrivacyBudget,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub d: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            eta: 0.0,
            gamma: 0.0,
            m: 0,
            j: 1,
            n: 0,
            budget: PrivacyBudget {
                epsilon: 1.0,
                delta: 0.0,
            },
            alpha: 0.1,
            beta: 0.05,
            sigma: 1.0,
            lambda: 1.0,
            d: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerOutput {
    pub fhat: Predictor,
    pub fbar: Predictor,
    pub fbar_public_values: Vec<f64>,
    pub fhat_public_values: Vec<f64>,
    pub oracle_calls: u64,
    pub rng_seed: u64,
    /// Largest certified objective gap among the oracle calls.
    pub solver_tolerance: f64,
}

fn require_convex(class: &FunctionClassDesc, loss: LossKind) -> Result<()> {
    if class.kind != ClassKind::LinearBall {
        return Err(Error::NonConvex(format!("{:?} is not a convex class", class.kind)));
    }
    if !loss.is_convex() {
        return Err(Error::NonConvex(format!("{loss:?} is not a convex loss")));
    }
    Ok(())
}

fn finish(
    fbar: Predictor,
    perturbed: Perturbed,
    oracle_calls: u64,
    rng_seed: u64,
    solver_tolerance: f64,
) -> LearnerOutput {
    LearnerOutput {
        fhat: perturbed.fhat,
        fbar,
        fbar_public_values: perturbed.fbar_public_values,
        fhat_public_values: perturbed.fhat_public_values,
        oracle_calls,
        rng_seed,
        solver_tolerance: solver_tolerance.max(perturbed.erm.tolerance),
    }
}

/// Perturbed-leader learner with `J` independent Gaussian process paths.
#[allow(clippy::too_many_arguments)]
pub fn ftpl_learn(
    data: &LabeledDataset,
    public: &PublicSample,
    class: &FunctionClassDesc,
    loss: LossKind,
    hp: &Hyperparams,
    spec: NoiseSpec,
    rng_seed: u64,
    opts: &SolverOptions,
) -> Result<LearnerOutput> {
    if hp.j == 0 {
        return Err(invalid("J", "must be at least 1"));
    }
    let paths: Vec<GpPath> = (0..hp.j)
        .map(|j| GpPath::sample(public.len(), seed::child(rng_seed, "gp", j as u64)))
        .collect();
    let zeta = sample_noise(spec, public.len(), &mut seed::stream(seed::child(rng_seed, "perturb", 0)))?;
    ftpl_with_paths(data, public, class, loss, hp.eta, hp.gamma, &paths, &zeta, rng_seed, opts)
}

/// Deterministic core of the perturbed-leader learner.
#[allow(clippy::too_many_arguments)]
pub fn ftpl_with_paths(
    data: &LabeledDataset,
    public: &PublicSample,
    class: &FunctionClassDesc,
    loss: LossKind,
    eta: f64,
    gamma: f64,
    paths: &[GpPath],
    zeta: &[f64],
    rng_seed: u64,
    opts: &SolverOptions,
) -> Result<LearnerOutput> {
    require_convex(class, loss)?;
    if paths.is_empty() {
        return Err(invalid("J", "must be at least 1"));
    }
    let (fbar, tol) = ftpl_average(data, public, class, loss, eta, paths, opts)?;
    let perturbed = perturb_with_noise(&fbar, zeta, gamma, public, class, opts)?;
    Ok(finish(fbar, perturbed, paths.len() as u64 + 1, rng_seed, tol))
}

/// Parameter average of the per-path minimizers.
pub fn ftpl_average(
    data: &LabeledDataset,
    public: &PublicSample,
    class: &FunctionClassDesc,
    loss: LossKind,
    eta: f64,
    paths: &[GpPath],
    opts: &SolverOptions,
) -> Result<(Predictor, f64)> {
    let mut sum = vec![0.0; class.param_len()];
    let mut tol = 0.0f64;
    for path in paths {
        let obj = ObjectiveSpec::new()
            .with_dataset(data, loss, 1.0)
            .with_gp(path, public, eta);
        let res = erm_with(class, &obj, opts)?;
        tol = tol.max(res.tolerance);
        sum.iter_mut().zip(&res.minimizer.params).for_each(|(s, p)| *s += p);
    }
    let j = paths.len() as f64;
    let params = sum.into_iter().map(|s| s / j).collect();
    Ok((Predictor { class: *class, params }, tol))
}

/// The regularized minimizer `(1/n) sum loss + eta |f|_m^2`.
pub fn ftrl_fbar(
    data: &LabeledDataset,
    public: &PublicSample,
    class: &FunctionClassDesc,
    loss: LossKind,
    eta: f64,
    opts: &SolverOptions,
) -> Result<(Predictor, f64)> {
    require_convex(class, loss)?;
    let obj = ObjectiveSpec::new()
        .with_dataset(data, loss, 1.0 / data.len() as f64)
        .with_ridge(public, eta);
    let res = erm_with(class, &obj, opts)?;
    Ok((res.minimizer, res.tolerance))
}

/// Regularized-leader learner followed by output perturbation.
#[allow(clippy::too_many_arguments)]
pub fn ftrl_learn(
    data: &LabeledDataset,
    public: &PublicSample,
    class: &FunctionClassDesc,
    loss: LossKind,
    hp: &Hyperparams,
    spec: NoiseSpec,
    rng_seed: u64,
    opts: &SolverOptions,
) -> Result<LearnerOutput> {
    let zeta = sample_noise(spec, public.len(), &mut seed::stream(seed::child(rng_seed, "perturb", 0)))?;
    ftrl_with_noise(data, public, class, loss, hp.eta, hp.gamma, &zeta, rng_seed, opts)
}

#[allow(clippy::too_many_arguments)]
pub fn ftrl_with_noise(
    data: &LabeledDataset,
    public: &PublicSample,
    class: &FunctionClassDesc,
    loss: LossKind,
    eta: f64,
    gamma: f64,
    zeta: &[f64],
    rng_seed: u64,
    opts: &SolverOptions,
) -> Result<LearnerOutput> {
    let (fbar, tol) = ftrl_fbar(data, public, class, loss, eta, opts)?;
    let perturbed = perturb_with_noise(&fbar, zeta, gamma, public, class, opts)?;
    Ok(finish(fbar, perturbed, 2, rng_seed, tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RrspmNoise {
    /// Weights `Lap(2m / epsilon)`.
    Laplace,
    /// Weights with standard deviation `c sqrt(m log(1/delta)) / epsilon`.
    Gaussian { c: f64 },
}

impl RrspmNoise {
    /// Laplace scale or Gaussian standard deviation of each weight.
    pub fn scale(&self, m: usize, budget: &PrivacyBudget) -> Result<f64> {
        let m = m as f64;
        match self {
            RrspmNoise::Laplace => Ok(2.0 * m / budget.epsilon),
            RrspmNoise::Gaussian { c } => {
                if !(budget.delta > 0.0) {
                    return Err(invalid("delta", "Gaussian weights need delta > 0"));
                }
                Ok(c * (m * (1.0 / budget.delta).ln()).sqrt() / budget.epsilon)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> f64 {
        match self {
            RrspmNoise::Laplace => sample_laplace(scale, rng),
            RrspmNoise::Gaussian { .. } => scale * rng.sample::<f64, _>(rand_distr::StandardNormal),
        }
    }
}

/// Pseudo-labels and weights drawn by the rounded separator learner.
pub fn rrspm_draws(m: usize, budget: &PrivacyBudget, noise: RrspmNoise, rng_seed: u64) -> Result<(Vec<bool>, Vec<f64>)> {
    let scale = noise.scale(m, budget)?;
    let mut lrng = seed::stream(seed::child(rng_seed, "pseudo_labels", 0));
    let ytilde = (0..m).map(|_| lrng.random::<bool>()).collect();
    let mut wrng = seed::stream(seed::child(rng_seed, "weights", 0));
    let xi = (0..m).map(|_| noise.sample(scale, &mut wrng)).collect();
    Ok((ytilde, xi))
}

pub fn rrspm_learn(
    data: &LabeledDataset,
    public: &PublicSample,
    class: &FunctionClassDesc,
    budget: &PrivacyBudget,
    noise: RrspmNoise,
    rng_seed: u64,
) -> Result<LearnerOutput> {
    let (ytilde, xi) = rrspm_draws(public.len(), budget, noise, rng_seed)?;
    rrspm_with_noise(data, public, class, &ytilde, &xi, rng_seed)
}

/// Deterministic core: weighted ERM on private and pseudo-labeled public data, then rounding.
pub fn rrspm_with_noise(
    data: &LabeledDataset,
    public: &PublicSample,
    class: &FunctionClassDesc,
    ytilde: &[bool],
    xi: &[f64],
    rng_seed: u64,
) -> Result<LearnerOutput> {
    if data.task() != Task::Classification {
        return Err(invalid("task", "the rounded separator learner needs binary labels"));
    }
    if !matches!(class.kind, ClassKind::Threshold1d | ClassKind::Halfspace) {
        return Err(invalid("class", "the rounded separator learner needs threshold1d or halfspace"));
    }
    if public.m_anchor() > 0 {
        return Err(invalid("public", "anchored public samples are not accepted here"));
    }
    for (name, len) in [("ytilde", ytilde.len()), ("xi", xi.len())] {
        if len != public.len() {
            return Err(invalid(name, format!("length {len} does not match m = {}", public.len())));
        }
    }
    let opts = SolverOptions::default();
    let mut obj = ObjectiveSpec::new().with_dataset(data, LossKind::ZeroOne, 1.0);
    for ((z, y), w) in public.points().iter().zip(ytilde).zip(xi) {
        obj = obj.with_loss(z, f64::from(u8::from(*y)), *w, LossKind::ZeroOne);
    }
    let ftilde = erm_with(class, &obj, &opts)?.minimizer;
    let zeta = vec![0.0; public.len()];
    let perturbed = perturb_with_noise(&ftilde, &zeta, 0.0, public, class, &opts)?;
    Ok(finish(ftilde, perturbed, 2, rng_seed, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    GeneralFull,
    FtrlFullGaussian,
    FtrlFullLaplace,
    RrspmPure,
    RrspmApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremArgs {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "unit")]
    pub sigma: f64,
    #[serde(default = "unit")]
    pub lambda: f64,
    #[serde(default = "unit")]
    pub d: f64,
    #[serde(default = "unit")]
    pub constant: f64,
}

fn unit() -> f64 {
    1.0
}

fn count(x: f64) -> usize {
    (x - 1e-9).ceil().max(1.0) as usize
}

/// Hyperparameters from the sample-complexity formulas, each scaled by `constant`.
pub fn hyperparams_calc(theorem: Theorem, a: &TheoremArgs) -> Result<Hyperparams> {
    for (name, v) in [
        ("alpha", a.alpha),
        ("beta", a.beta),
        ("epsilon", a.epsilon),
        ("sigma", a.sigma),
        ("lambda", a.lambda),
        ("d", a.d),
        ("constant", a.constant),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, "must be positive and finite"));
        }
    }
    if a.sigma > 1.0 {
        return Err(invalid("sigma", "must lie in (0, 1]"));
    }
    if a.beta >= 1.0 {
        return Err(invalid("beta", "must lie in (0, 1)"));
    }
    let gaussian = matches!(theorem, Theorem::GeneralFull | Theorem::FtrlFullGaussian | Theorem::RrspmApprox);
    if gaussian && !(a.delta > 0.0 && a.delta < 1.0) {
        return Err(invalid("delta", "this theorem needs 0 < delta < 1"));
    }
    let (al, s, lam, d, e, c) = (a.alpha, a.sigma, a.lambda, a.d, a.epsilon, a.constant);
    let lb = (1.0 / a.beta).ln();
    let ld = if a.delta > 0.0 { (1.0 / a.delta).ln() } else { 0.0 };
    let mut hp = Hyperparams {
        budget: PrivacyBudget::new(e, a.delta)?,
        alpha: al,
        beta: a.beta,
        sigma: s,
        lambda: lam,
        d,
        ..Hyperparams::default()
    };
    let common_m = c * d.max(lb) * lam.powi(2) / (s.powi(2) * al.powi(2));
    match theorem {
        Theorem::GeneralFull => {
            hp.gamma = c * s * al / (lam * lb.sqrt());
            hp.eta = c * al / d.sqrt();
            hp.m = count(common_m);
            let j = (d * lb / al.powi(2))
                .max(lam.powi(8) * d.powi(2) * lb.powi(4) * ld / (s.powi(8) * al.powi(8) * e * e))
                .max(d.powi(2) * lam.powi(6) * lb.powi(3) * ld.powi(2) / (s.powi(6) * al.powi(6) * e * e));
            hp.j = count(c * j);
            let n = (lam.powi(12) * d.powi(5) * lb.powi(6) / (s.powi(12) * e.powi(3) * al.powi(14))).max(
                d.powi(5) * lam.powi(9) * lb.powf(4.5) * ld.powf(1.5) / (s.powi(9) * e.powi(3) * al.powi(10)),
            );
            hp.n = count(c * n);
        }
        Theorem::FtrlFullGaussian => {
            hp.gamma = c * s * al / (lam * lb.sqrt());
            hp.eta = c * al;
            hp.m = count(common_m);
            let n = (lam.powi(5) * d * lb.powi(2) / (e * s.powi(4) * al.powi(5)))
                .max(lam.powi(4) * d * lb.powf(1.5) * ld.sqrt() / (e * s.powi(3) * al.powi(4)));
            hp.n = count(c * n);
        }
        Theorem::FtrlFullLaplace => {
            hp.gamma = c * al.powi(2) * s / (lam.powi(2) * (d * lb.sqrt()).min(lb));
            hp.eta = c * al;
            hp.m = count(common_m);
            let n = lam.powi(6) / (s.powi(5) * e * al.powi(6)) * (d.powi(2) * lb.sqrt()).max(lb.powf(2.5));
            hp.n = count(c * n);
        }
        Theorem::RrspmPure => {
            hp.m = count(c * (d + lb) / (al.powi(2) * s.powi(2)));
            hp.n = count(c * d.powi(2) * (d + 2.0).ln() * lb / (al.powi(5) * s.powi(4) * e));
        }
        Theorem::RrspmApprox => {
            hp.m = count(c * (d + lb) / (al.powi(2) * s.powi(2)));
            hp.n = count(c * d.powi(2) * (d + 2.0).ln() * ld.sqrt() * lb / (al.powi(4) * s.powi(4) * e));
        }
    }
    Ok(hp)
}

/// Values of `f` on the public points; convenience for callers scoring outputs.
pub fn public_values(f: &Predictor, public: &PublicSample) -> Result<Vec<f64>> {
    evaluate_on(f, public.points())
}
