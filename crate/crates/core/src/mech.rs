//! Noise sampling, output perturbation and the stability to privacy calculus.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{evaluate_on, FunctionClassDesc, Predictor, PublicSample};
use crate::error::{invalid, Error, Result};
use crate::oracle::{erm_with, ErmResult, ObjectiveSpec, SolverOptions};

/// Unit-scale noise law; the scale enters through `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    GaussianStd,
    LaplaceStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid("epsilon", "must be positive and finite"));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid("delta", "must lie in [0, 1)"));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    /// Rejects `delta = 0` for Gaussian mechanisms.
    pub fn check_for(&self, spec: NoiseSpec) -> Result<()> {
        if spec == NoiseSpec::GaussianStd && self.delta <= 0.0 {
            return Err(invalid("delta", "Gaussian noise needs delta > 0"));
        }
        Ok(())
    }
}

/// One draw from the Laplace law with the given scale, by inversion.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    // u in (-1/2, 1/2), never exactly -1/2.
    let u: f64 = rng.random::<f64>() - 0.5;
    let u = if u == -0.5 { 0.0 } else { u };
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

pub fn sample_noise<R: Rng + ?Sized>(spec: NoiseSpec, m: usize, rng: &mut R) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(invalid("m", "noise length must be at least 1"));
    }
    Ok(match spec {
        NoiseSpec::GaussianStd => (0..m).map(|_| rng.sample(StandardNormal)).collect(),
        NoiseSpec::LaplaceStd => (0..m).map(|_| sample_laplace(1.0, rng)).collect(),
    })
}

/// Output of the perturbation step with the values it induced.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub fhat: Predictor,
    pub fhat_public_values: Vec<f64>,
    pub fbar_public_values: Vec<f64>,
    pub noise: Vec<f64>,
    pub erm: ErmResult,
}

/// Project `fbar + gamma * zeta` back onto the class.
pub fn perturb<R: Rng + ?Sized>(
    fbar: &Predictor,
    spec: NoiseSpec,
    gamma: f64,
    public: &PublicSample,
    class: &FunctionClassDesc,
    rng: &mut R,
) -> Result<Perturbed> {
    let zeta = sample_noise(spec, public.len().max(1), rng)?;
    perturb_with_noise(fbar, &zeta, gamma, public, class, &SolverOptions::default())
}

/// Perturbation with an explicit noise vector.
pub fn perturb_with_noise(
    fbar: &Predictor,
    zeta: &[f64],
    gamma: f64,
    public: &PublicSample,
    class: &FunctionClassDesc,
    opts: &SolverOptions,
) -> Result<Perturbed> {
    if public.is_empty() {
        return Err(Error::EmptyPublicSample);
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma", "must be finite and nonnegative"));
    }
    if zeta.len() != public.len() {
        return Err(Error::LengthMismatch {
            expected: public.len(),
            found: zeta.len(),
        });
    }
    let fbar_public_values = evaluate_on(fbar, public.points())?;
    let target: Vec<f64> = fbar_public_values
        .iter()
        .zip(zeta)
        .map(|(v, z)| v + gamma * z)
        .collect();
    let obj = ObjectiveSpec::new().with_distance(public, target);
    let erm = erm_with(class, &obj, opts)?;
    let fhat_public_values = evaluate_on(&erm.minimizer, public.points())?;
    Ok(Perturbed {
        fhat: erm.minimizer.clone(),
        fhat_public_values,
        fbar_public_values,
        noise: zeta.to_vec(),
        erm,
    })
}

fn log_inv(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", "Gaussian noise needs 0 < delta < 1"));
    }
    Ok((1.0 / delta).ln())
}

/// Privacy level of Perturb applied to a `rho`-stable learner.
pub fn privacy_from_stability(m: usize, gamma: f64, rho: f64, delta: f64, spec: NoiseSpec) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma", "must be positive"));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(invalid("rho", "must be nonnegative"));
    }
    let m = m as f64;
    match spec {
        NoiseSpec::GaussianStd => {
            let l = log_inv(delta)?;
            Ok(m / (2.0 * gamma * gamma) * (1.0 + gamma * l.sqrt()) * rho)
        }
        NoiseSpec::LaplaceStd => Ok(m.powf(1.5) / gamma * rho),
    }
}

/// Smallest `gamma` for which `privacy_from_stability` is at most `epsilon`.
pub fn calibrate_gamma(m: usize, rho: f64, epsilon: f64, delta: f64, spec: NoiseSpec) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid("epsilon", "must be positive"));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid("rho", "must be positive"));
    }
    let mf = m as f64;
    match spec {
        NoiseSpec::LaplaceStd => Ok(mf.powf(1.5) * rho / epsilon),
        NoiseSpec::GaussianStd => {
            // eps g^2 - (m rho / 2) sqrt(L) g - m rho / 2 = 0
            let l = log_inv(delta)?.sqrt();
            let h = mf * rho / 2.0;
            let disc = (h * l).powi(2) + 4.0 * epsilon * h;
            Ok((h * l + disc.sqrt()) / (2.0 * epsilon))
        }
    }
}

/// Bin key of a vector of public-point values: sign pattern and a uniform
/// quantization of [-1, 1] into `bins` cells per value.
pub fn discretize(values: &[f64], bins: usize) -> Vec<u16> {
    let bins = bins.max(1);
    let mut key = Vec::with_capacity(2 * values.len());
    for &v in values {
        key.push(u16::from(v >= 0.0));
        let cell = (((v.clamp(-1.0, 1.0) + 1.0) / 2.0) * bins as f64).floor() as usize;
        key.push(cell.min(bins - 1) as u16);
    }
    key
}

/// Histogram of discretized outputs.
pub fn bin_counts<'a>(outputs: impl IntoIterator<Item = &'a [f64]>, bins: usize) -> BTreeMap<Vec<u16>, u64> {
    let mut counts = BTreeMap::new();
    for v in outputs {
        *counts.entry(discretize(v, bins)).or_insert(0) += 1;
    }
    counts
}
