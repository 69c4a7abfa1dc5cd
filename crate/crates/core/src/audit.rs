//! Empirical checks of stability, privacy and learning guarantees.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dists::{draw_private, draw_public, BaseDist, LabelModel, SmoothTarget};
use crate::domain::{
    dot, empirical_distance, empirical_norm, evaluate_on, ClassKind, FeaturePoint, FunctionClassDesc, GpPath,
    LabeledDataset, Predictor, PublicSample, Task,
};
use crate::error::{invalid, Error, Result};
use crate::learners::{ftrl_fbar, RrspmNoise};
use crate::mech::{bin_counts, sample_laplace, PrivacyBudget};
use crate::oracle::{erm_maximize_gp_with, erm_with, projection_costs, LossKind, ObjectiveSpec, SolverOptions};
use crate::seed;
use crate::stats::{clopper_pearson, mean_ci, CONFIDENCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub quantity: String,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: f64,
    pub trials: u64,
    pub verdict: Verdict,
}

impl AuditReport {
    /// Pass when the interval lies below the bound, fail when it lies above.
    pub fn one_sided(quantity: impl Into<String>, estimate: f64, ci: (f64, f64), bound: f64, trials: u64) -> Self {
        let verdict = if ci.1 <= bound {
            Verdict::Pass
        } else if ci.0 > bound {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        };
        Self {
            quantity: quantity.into(),
            estimate,
            ci_low: ci.0,
            ci_high: ci.1,
            bound,
            trials,
            verdict,
        }
    }

    /// A deterministic predicate with a point value.
    pub fn exact(quantity: impl Into<String>, value: f64, bound: f64, pass: bool, trials: u64) -> Self {
        Self {
            quantity: quantity.into(),
            estimate: value,
            ci_low: value,
            ci_high: value,
            bound,
            trials,
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        }
    }
}

/// Datasets differing in exactly one element.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborPair {
    pub d: LabeledDataset,
    pub dprime: LabeledDataset,
    pub swapped_index: usize,
}

impl NeighborPair {
    pub fn new(d: LabeledDataset, dprime: LabeledDataset) -> Result<Self> {
        if d.len() != dprime.len() {
            return Err(Error::LengthMismatch {
                expected: d.len(),
                found: dprime.len(),
            });
        }
        let diff: Vec<usize> = (0..d.len())
            .filter(|&i| d.points()[i] != dprime.points()[i])
            .collect();
        if diff.len() != 1 {
            return Err(invalid(
                "pair",
                format!("neighbors differ in exactly one element, found {}", diff.len()),
            ));
        }
        Ok(Self {
            d,
            dprime,
            swapped_index: diff[0],
        })
    }

    pub fn swap(d: &LabeledDataset, index: usize, point: FeaturePoint, label: f64) -> Result<Self> {
        Self::new(d.clone(), d.replace(index, point, label)?)
    }

    /// `D' = D`, bypassing the neighbor check.
    pub fn degenerate(d: LabeledDataset) -> Self {
        Self {
            dprime: d.clone(),
            d,
            swapped_index: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }
}

/// Distance between the regularized minimizers on a neighboring pair.
pub fn ftrl_stability_check(
    pair: &NeighborPair,
    public: &PublicSample,
    class: &FunctionClassDesc,
    loss: LossKind,
    eta: f64,
    opts: &SolverOptions,
) -> Result<AuditReport> {
    if !(eta > 0.0) {
        return Err(invalid("eta", "must be positive"));
    }
    let (f, _) = ftrl_fbar(&pair.d, public, class, loss, eta, opts)?;
    let (g, _) = ftrl_fbar(&pair.dprime, public, class, loss, eta, opts)?;
    let dist = empirical_distance(&evaluate_on(&f, public.points())?, &evaluate_on(&g, public.points())?)?;
    let bound = 2.0 / (eta * pair.n() as f64).sqrt() + 2.0 * opts.tolerance;
    Ok(AuditReport::exact("ftrl_stability", dist, bound, dist <= bound, 1))
}

/// A random class member, for norm floors and norm comparisons.
pub fn random_member<R: Rng + ?Sized>(class: &FunctionClassDesc, rng: &mut R) -> Predictor {
    match class.kind {
        ClassKind::Threshold1d => Predictor::threshold(rng.random_range(-0.1..1.1)),
        ClassKind::Halfspace => {
            let w: Vec<f64> = (0..class.dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = dot(&w, &w).sqrt();
            let mut params: Vec<f64> = w.iter().map(|v| v / n).collect();
            params.push(rng.random_range(-1.0..1.0));
            Predictor { class: *class, params }
        }
        ClassKind::LinearBall => {
            let w: Vec<f64> = (0..class.dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = dot(&w, &w).sqrt();
            let r = rng.random::<f64>().powf(1.0 / class.dim as f64);
            Predictor {
                class: *class,
                params: w.iter().map(|v| v * r / n).collect(),
            }
        }
    }
}

/// The class member with the smallest values: all zeros, or zero weights.
fn smallest_member(class: &FunctionClassDesc) -> Predictor {
    match class.kind {
        ClassKind::Threshold1d => Predictor::threshold(f64::INFINITY),
        ClassKind::Halfspace => {
            let mut params = vec![0.0; class.dim];
            params.push(-1.0);
            Predictor { class: *class, params }
        }
        ClassKind::LinearBall => Predictor {
            class: *class,
            params: vec![0.0; class.dim],
        },
    }
}

/// Minimum of `|f|_m^2` over sampled members and the smallest member.
pub fn kappa_squared_estimate(class: &FunctionClassDesc, public: &PublicSample, samples: usize, rng_seed: u64) -> Result<f64> {
    let mut rng = seed::stream(rng_seed);
    let mut best = empirical_norm(&evaluate_on(&smallest_member(class), public.points())?)?.powi(2);
    for _ in 0..samples {
        let f = random_member(class, &mut rng);
        best = best.min(empirical_norm(&evaluate_on(&f, public.points())?)?.powi(2));
    }
    Ok(best)
}

/// Supremum of the Gaussian process for each of `trials` paths.
pub fn gp_sup_samples(
    class: &FunctionClassDesc,
    public: &PublicSample,
    trials: usize,
    rng_seed: u64,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    (0..trials)
        .map(|t| {
            let path = GpPath::sample(public.len(), seed::child(rng_seed, "complexity", t as u64));
            erm_maximize_gp_with(class, &path, public, opts)
        })
        .collect()
}

/// Monte Carlo mean of `sup_f omega(f)` with a normal interval.
pub fn gaussian_complexity_estimate(
    class: &FunctionClassDesc,
    public: &PublicSample,
    trials: usize,
    rng_seed: u64,
    opts: &SolverOptions,
) -> Result<AuditReport> {
    if trials < 100 {
        return Err(Error::Underpowered { trials, minimum: 100 });
    }
    let sups = gp_sup_samples(class, public, trials, rng_seed, opts)?;
    Ok(complexity_report("gaussian_complexity", &sups, public.len()))
}

fn complexity_report(name: &str, sups: &[f64], m: usize) -> AuditReport {
    let (mean, lo, hi) = mean_ci(sups, CONFIDENCE);
    // E sup <= E (1/sqrt m) sum |xi_i| for classes bounded by 1.
    let bound = (m as f64).sqrt() * (2.0 / std::f64::consts::PI).sqrt();
    AuditReport::one_sided(name, mean, (lo, hi), bound, sups.len() as u64)
}

/// Closed-form supremum over the linear ball for one path: the norm of
/// `(1/sqrt m) sum xi_i z_i` over real points plus the anchors' constant part.
pub fn linear_ball_sup(path: &GpPath, public: &PublicSample) -> Result<f64> {
    if path.len() != public.len() {
        return Err(Error::LengthMismatch {
            expected: public.len(),
            found: path.len(),
        });
    }
    let m = public.len() as f64;
    let mut g = vec![0.0; public.dim()];
    let mut constant = 0.0;
    for (xi, z) in path.xi.iter().zip(public.points()) {
        if z.is_anchor() {
            constant += xi;
        } else {
            g.iter_mut().zip(z.coords()).for_each(|(a, c)| *a += xi * c);
        }
    }
    Ok((dot(&g, &g).sqrt() + constant) / m.sqrt())
}

/// Monte Carlo of the closed-form linear-ball supremum.
pub fn dual_norm_complexity(public: &PublicSample, trials: usize, rng_seed: u64) -> Result<AuditReport> {
    if trials < 100 {
        return Err(Error::Underpowered { trials, minimum: 100 });
    }
    let sups: Vec<f64> = (0..trials)
        .map(|t| linear_ball_sup(&GpPath::sample(public.len(), seed::child(rng_seed, "complexity", t as u64)), public))
        .collect::<Result<_>>()?;
    Ok(complexity_report("dual_norm_complexity", &sups, public.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    pub trials: usize,
    pub kappa_samples: usize,
    pub complexity_paths: usize,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            kappa_samples: 1000,
            complexity_paths: 1000,
        }
    }
}

/// Quantities entering the anti-concentration bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailInputs {
    pub tau: f64,
    pub kappa_squared: f64,
    pub expected_sup: f64,
}

/// `8 tau E[sup omega] / (rho^4 kappa^2 eta)`.
pub fn tail_bound(rho: f64, eta: f64, inputs: &TailInputs) -> f64 {
    8.0 * inputs.tau * inputs.expected_sup / (rho.powi(4) * inputs.kappa_squared * eta)
}

pub fn tail_inputs(
    class: &FunctionClassDesc,
    public: &PublicSample,
    loss: LossKind,
    cfg: &TailConfig,
    rng_seed: u64,
    opts: &SolverOptions,
) -> Result<TailInputs> {
    let kappa_squared = kappa_squared_estimate(class, public, cfg.kappa_samples, seed::child(rng_seed, "kappa", 0))?;
    let sups = gp_sup_samples(class, public, cfg.complexity_paths.max(1), seed::child(rng_seed, "complexity", 0), opts)?;
    let expected_sup = sups.iter().sum::<f64>() / sups.len() as f64;
    Ok(TailInputs {
        tau: loss.range(),
        kappa_squared,
        expected_sup,
    })
}

/// Tail frequencies of the distance between perturbed-leader minimizers on
/// a neighboring pair that share one Gaussian process path per trial.
#[allow(clippy::too_many_arguments)]
pub fn ftpl_tail_check(
    pair: &NeighborPair,
    public: &PublicSample,
    class: &FunctionClassDesc,
    loss: LossKind,
    eta: f64,
    rho_grid: &[f64],
    cfg: &TailConfig,
    rng_seed: u64,
    opts: &SolverOptions,
) -> Result<Vec<AuditReport>> {
    if cfg.trials < 1000 {
        return Err(Error::Underpowered {
            trials: cfg.trials,
            minimum: 1000,
        });
    }
    if !(eta > 0.0) {
        return Err(invalid("eta", "must be positive"));
    }
    let inputs = tail_inputs(class, public, loss, cfg, rng_seed, opts)?;
    let dists = ftpl_coupled_distances(pair, public, class, loss, eta, cfg.trials, rng_seed, opts)?;
    Ok(rho_grid
        .iter()
        .map(|&rho| {
            let k = dists.iter().filter(|&&d| d > rho).count() as u64;
            let n = dists.len() as u64;
            AuditReport::one_sided(
                format!("ftpl_tail(rho={rho})"),
                k as f64 / n as f64,
                clopper_pearson(k, n, CONFIDENCE),
                tail_bound(rho, eta, &inputs),
                n,
            )
        })
        .collect())
}

/// Per-trial distances `|f - f'|_m` under a shared path.
#[allow(clippy::too_many_arguments)]
pub fn ftpl_coupled_distances(
    pair: &NeighborPair,
    public: &PublicSample,
    class: &FunctionClassDesc,
    loss: LossKind,
    eta: f64,
    trials: usize,
    rng_seed: u64,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    (0..trials)
        .map(|t| {
            let path = GpPath::sample(public.len(), seed::child(rng_seed, "tail", t as u64));
            let solve = |d: &LabeledDataset| -> Result<Vec<f64>> {
                let obj = ObjectiveSpec::new()
                    .with_dataset(d, loss, 1.0)
                    .with_gp(&path, public, eta);
                evaluate_on(&erm_with(class, &obj, opts)?.minimizer, public.points())
            };
            empirical_distance(&solve(&pair.d)?, &solve(&pair.dprime)?)
        })
        .collect()
}

/// Shift each coordinate by +2 where the labeling agrees with `ytilde` and by -2 elsewhere.
pub fn psi_map(xi: &[f64], labeling: &[bool], ytilde: &[bool]) -> Result<Vec<f64>> {
    if xi.len() != labeling.len() || xi.len() != ytilde.len() {
        return Err(Error::LengthMismatch {
            expected: xi.len(),
            found: if labeling.len() != xi.len() { labeling.len() } else { ytilde.len() },
        });
    }
    Ok(xi
        .iter()
        .zip(labeling.iter().zip(ytilde))
        .map(|(x, (f, y))| if f == y { x + 2.0 } else { x - 2.0 })
        .collect())
}

/// Laplace density ratio `p(xi_shifted) / p(xi)` at the given scale.
pub fn laplace_shift_ratio(xi: &[f64], xi_shifted: &[f64], scale: f64) -> Result<f64> {
    if xi.len() != xi_shifted.len() {
        return Err(Error::LengthMismatch {
            expected: xi.len(),
            found: xi_shifted.len(),
        });
    }
    if !(scale > 0.0) {
        return Err(invalid("scale", "must be positive"));
    }
    let mut log = 0.0;
    for (a, b) in xi.iter().zip(xi_shifted) {
        if (a - b).abs() > 2.0 + 1e-12 {
            return Err(invalid("xi_shifted", "per-coordinate shift exceeds 2"));
        }
        log += (a.abs() - b.abs()) / scale;
    }
    Ok(log.exp())
}

/// Projected labelings with their costs on both datasets and disagreement vectors.
struct Projection {
    labelings: Vec<Vec<bool>>,
    cost_d: Vec<f64>,
    cost_dprime: Vec<f64>,
    disagree: Vec<Vec<bool>>,
}

fn projection(pair: &NeighborPair, public: &PublicSample, ytilde: &[bool], class: &FunctionClassDesc) -> Result<Projection> {
    if pair.d.task() != Task::Classification {
        return Err(invalid("task", "needs binary labels"));
    }
    if ytilde.len() != public.len() {
        return Err(Error::LengthMismatch {
            expected: public.len(),
            found: ytilde.len(),
        });
    }
    let pd = projection_costs(class, &pair.d, public)?;
    let pdp = projection_costs(class, &pair.dprime, public)?;
    if pd.len() > 64 {
        return Err(invalid("public", format!("{} projected labelings exceed 64", pd.len())));
    }
    let other: HashMap<&Vec<bool>, f64> = pdp.iter().map(|p| (&p.labeling, p.private_cost)).collect();
    let mut out = Projection {
        labelings: Vec::new(),
        cost_d: Vec::new(),
        cost_dprime: Vec::new(),
        disagree: Vec::new(),
    };
    for p in &pd {
        let c2 = *other
            .get(&p.labeling)
            .ok_or_else(|| invalid("projection", "labeling sets differ between neighbors"))?;
        out.disagree.push(p.labeling.iter().zip(ytilde).map(|(a, b)| a != b).collect());
        out.labelings.push(p.labeling.clone());
        out.cost_d.push(p.private_cost);
        out.cost_dprime.push(c2);
    }
    Ok(out)
}

fn scores(costs: &[f64], disagree: &[Vec<bool>], xi: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for (c, a) in costs.iter().zip(disagree) {
        let mut s = *c;
        for (x, d) in xi.iter().zip(a) {
            if *d {
                s += x;
            }
        }
        out.push(s);
    }
}

/// Index of the strict minimizer and the gap to the runner-up.
fn winner(scores: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] < scores[best] {
            best = i;
        }
    }
    let gap = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != best)
        .map(|(_, s)| s - scores[best])
        .fold(f64::INFINITY, f64::min);
    (best, gap)
}

const TIE_GAP: f64 = 1e-9;

/// Checks that shifting the noise by the winner's pattern keeps it the strict winner on the neighbor.
#[allow(clippy::too_many_arguments)]
pub fn psi_coupling_test(
    pair: &NeighborPair,
    public: &PublicSample,
    ytilde: &[bool],
    class: &FunctionClassDesc,
    epsilon: f64,
    trials: usize,
    rng_seed: u64,
) -> Result<AuditReport> {
    let proj = projection(pair, public, ytilde, class)?;
    let scale = 2.0 * public.len() as f64 / epsilon;
    let mut rng = seed::stream(seed::child(rng_seed, "psi", 0));
    let mut violations = 0u64;
    let mut s = Vec::new();
    let mut xi = vec![0.0; public.len()];
    for _ in 0..trials {
        let w = loop {
            xi.iter_mut().for_each(|x| *x = sample_laplace(scale, &mut rng));
            scores(&proj.cost_d, &proj.disagree, &xi, &mut s);
            let (w, gap) = winner(&s);
            if gap > TIE_GAP {
                break w;
            }
        };
        let shifted = psi_map(&xi, &proj.labelings[w], ytilde)?;
        scores(&proj.cost_dprime, &proj.disagree, &shifted, &mut s);
        let (w2, gap2) = winner(&s);
        if w2 != w || gap2 <= 0.0 {
            violations += 1;
        }
    }
    Ok(AuditReport::exact("psi_coupling_violations", violations as f64, 0.0, violations == 0, trials as u64))
}

/// How the audited rounded separator mechanism draws its weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrspmMechanism {
    pub noise: RrspmNoise,
    /// Budget the weights are calibrated to.
    pub calibration: PrivacyBudget,
}

/// Winner counts per projected labeling under the mechanism's noise.
pub fn rrspm_winner_counts(
    costs: &[f64],
    disagree: &[Vec<bool>],
    noise: RrspmNoise,
    scale: f64,
    trials: usize,
    rng_seed: u64,
) -> Vec<u64> {
    let m = disagree.first().map_or(0, |a| a.len());
    let mut rng = seed::stream(rng_seed);
    let mut counts = vec![0u64; costs.len()];
    let mut xi = vec![0.0; m];
    let mut s = Vec::new();
    for _ in 0..trials {
        xi.iter_mut().for_each(|x| *x = noise.sample(scale, &mut rng));
        scores(costs, disagree, &xi, &mut s);
        counts[winner(&s).0] += 1;
    }
    counts
}

/// Per-labeling outcome frequencies on both datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelingFrequencies {
    pub labelings: Vec<Vec<bool>>,
    pub counts_d: Vec<u64>,
    pub counts_dprime: Vec<u64>,
    pub trials: u64,
}

/// Largest ratio of outcome probabilities between the neighbors, as a report against `e^epsilon`.
#[allow(clippy::too_many_arguments)]
pub fn rrspm_privacy_audit(
    pair: &NeighborPair,
    public: &PublicSample,
    ytilde: &[bool],
    class: &FunctionClassDesc,
    mechanism: &RrspmMechanism,
    audit: &PrivacyBudget,
    trials: usize,
    min_count: u64,
    rng_seed: u64,
) -> Result<(AuditReport, LabelingFrequencies)> {
    let proj = projection(pair, public, ytilde, class)?;
    let scale = mechanism.noise.scale(public.len(), &mechanism.calibration)?;
    let counts_d = rrspm_winner_counts(&proj.cost_d, &proj.disagree, mechanism.noise, scale, trials, seed::child(rng_seed, "D", 0));
    let counts_dprime = rrspm_winner_counts(
        &proj.cost_dprime,
        &proj.disagree,
        mechanism.noise,
        scale,
        trials,
        seed::child(rng_seed, "D'", 0),
    );
    let freqs = LabelingFrequencies {
        labelings: proj.labelings,
        counts_d,
        counts_dprime,
        trials: trials as u64,
    };
    let report = ratio_report(
        "rrspm_privacy_ratio",
        freqs.counts_d.iter().copied().zip(freqs.counts_dprime.iter().copied()),
        trials as u64,
        audit,
        min_count,
        false,
    );
    Ok((report, freqs))
}

/// Max over outcomes and both directions of `(p - delta) / q` with
/// Clopper-Pearson intervals, in ratio or log-ratio form.
fn ratio_report(
    name: &str,
    counts: impl Iterator<Item = (u64, u64)>,
    trials: u64,
    audit: &PrivacyBudget,
    min_count: u64,
    log_scale: bool,
) -> AuditReport {
    let mut est = f64::NEG_INFINITY;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut eligible = false;
    let n = trials as f64;
    for (a, b) in counts {
        if a < min_count || b < min_count {
            continue;
        }
        eligible = true;
        let ca = clopper_pearson(a, trials, CONFIDENCE);
        let cb = clopper_pearson(b, trials, CONFIDENCE);
        for (p, cp, q, cq) in [(a, ca, b, cb), (b, cb, a, ca)] {
            let point = (p as f64 / n - audit.delta).max(0.0) / (q as f64 / n);
            let upper = (cp.1 - audit.delta).max(0.0) / cq.0;
            let lower = (cp.0 - audit.delta).max(0.0) / cq.1;
            est = est.max(point);
            hi = hi.max(upper);
            lo = lo.max(lower);
        }
    }
    let map = |r: f64| if log_scale { r.ln() } else { r };
    let bound = if log_scale { audit.epsilon } else { audit.epsilon.exp() };
    if !eligible {
        return AuditReport {
            quantity: name.into(),
            estimate: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
            bound,
            trials,
            verdict: Verdict::Inconclusive,
        };
    }
    AuditReport::one_sided(name, map(est), (map(lo), map(hi)), bound, trials)
}

/// Replacement of one element, chosen from `candidates`, that most changes
/// the projected cost differences. Ties go to the lowest (index, candidate).
pub fn worst_case_neighbor(
    data: &LabeledDataset,
    public: &PublicSample,
    class: &FunctionClassDesc,
    candidates: &[(FeaturePoint, f64)],
) -> Result<NeighborPair> {
    let base = projection_costs(class, data, public)?;
    let base_costs: HashMap<&Vec<bool>, f64> = base.iter().map(|p| (&p.labeling, p.private_cost)).collect();
    let mut best: Option<(f64, NeighborPair)> = None;
    for i in 0..data.len() {
        for (x, y) in candidates {
            if data.points()[i] == (x.clone(), *y) {
                continue;
            }
            let pair = NeighborPair::swap(data, i, x.clone(), *y)?;
            let other = projection_costs(class, &pair.dprime, public)?;
            let delta: Vec<f64> = other
                .iter()
                .map(|p| p.private_cost - base_costs.get(&p.labeling).copied().unwrap_or(p.private_cost))
                .collect();
            let mut score = 0.0;
            for u in 0..delta.len() {
                for v in u + 1..delta.len() {
                    score += (delta[u] - delta[v]).abs();
                }
            }
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, pair));
            }
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| invalid("candidates", "no replacement differs from the data"))
}

/// Neighbor and pseudo-label vector with the largest pilot ratio for the rounded
/// separator mechanism. Every replacement in `candidates` and every `ytilde` in
/// `{0,1}^m` is tried; replacements with identical projected costs are scored once.
/// The pilot draws are independent of any later audit run on the result.
#[allow(clippy::too_many_arguments)]
pub fn rrspm_worst_instance(
    data: &LabeledDataset,
    public: &PublicSample,
    class: &FunctionClassDesc,
    candidates: &[(FeaturePoint, f64)],
    mechanism: &RrspmMechanism,
    audit: &PrivacyBudget,
    pilot_trials: usize,
    min_count: u64,
    rng_seed: u64,
) -> Result<(NeighborPair, Vec<bool>)> {
    let m = public.len();
    if m > 6 {
        return Err(invalid("public", format!("m = {m} is too large to enumerate pseudo-labels")));
    }
    let scale = mechanism.noise.scale(m, &mechanism.calibration)?;
    let ytildes: Vec<Vec<bool>> = (0..1usize << m)
        .map(|bits| (0..m).map(|j| bits >> j & 1 == 1).collect())
        .collect();
    let mut seen: Vec<Vec<f64>> = Vec::new();
    let mut best: Option<(f64, NeighborPair, Vec<bool>)> = None;
    for i in 0..data.len() {
        for (x, y) in candidates {
            if data.points()[i] == (x.clone(), *y) {
                continue;
            }
            let pair = NeighborPair::swap(data, i, x.clone(), *y)?;
            let costs: Vec<f64> = projection_costs(class, &pair.dprime, public)?
                .iter()
                .map(|p| p.private_cost)
                .collect();
            if seen.contains(&costs) {
                continue;
            }
            seen.push(costs);
            for (k, yt) in ytildes.iter().enumerate() {
                let proj = projection(&pair, public, yt, class)?;
                let pilot = seed::child(rng_seed, "pilot", (seen.len() * ytildes.len() + k) as u64);
                let a = rrspm_winner_counts(&proj.cost_d, &proj.disagree, mechanism.noise, scale, pilot_trials, seed::child(pilot, "D", 0));
                let b = rrspm_winner_counts(&proj.cost_dprime, &proj.disagree, mechanism.noise, scale, pilot_trials, seed::child(pilot, "D'", 0));
                let r = ratio_report("pilot", a.into_iter().zip(b), pilot_trials as u64, audit, min_count, false);
                if r.estimate.is_finite() && best.as_ref().is_none_or(|(s, _, _)| r.estimate > *s) {
                    best = Some((r.estimate, pair.clone(), yt.clone()));
                }
            }
        }
    }
    best.map(|(_, p, y)| (p, y))
        .ok_or_else(|| invalid("candidates", "no replacement gives an eligible labeling"))
}

/// Test sample and non-private reference minimizer for excess-risk estimates.
#[derive(Debug, Clone)]
pub struct ExcessRiskEvaluator {
    test: LabeledDataset,
    loss: LossKind,
    best_losses: Vec<f64>,
    pub f_best: Predictor,
}

impl ExcessRiskEvaluator {
    pub fn new(
        class: &FunctionClassDesc,
        target: &SmoothTarget,
        labels: &LabelModel,
        loss: LossKind,
        test_n: usize,
        rng_seed: u64,
    ) -> Result<Self> {
        if test_n == 0 {
            return Err(invalid("test_n", "must be at least 1"));
        }
        let loss = if class.is_binary() { LossKind::ZeroOne } else { loss };
        let test = draw_private(target, labels, test_n, &mut seed::stream(seed::child(rng_seed, "test", 0)))?;
        let train = draw_private(target, labels, 10 * test_n, &mut seed::stream(seed::child(rng_seed, "best", 0)))?;
        let obj = ObjectiveSpec::new().with_dataset(&train, loss, 1.0 / train.len() as f64);
        let opts = SolverOptions {
            tolerance: 1e-5,
            ..SolverOptions::default()
        };
        let f_best = erm_with(class, &obj, &opts)?.minimizer;
        let best_losses = Self::losses_of(&test, loss, &f_best)?;
        Ok(Self {
            test,
            loss,
            best_losses,
            f_best,
        })
    }

    fn losses_of(test: &LabeledDataset, loss: LossKind, f: &Predictor) -> Result<Vec<f64>> {
        test.iter().map(|(x, y)| Ok(loss.eval(f.eval(x)?, *y))).collect()
    }

    /// Empirical test risk of `f`.
    pub fn risk(&self, f: &Predictor) -> Result<f64> {
        let l = Self::losses_of(&self.test, self.loss, f)?;
        Ok(l.iter().sum::<f64>() / l.len() as f64)
    }

    /// Paired difference of test losses against the reference, with a normal interval.
    pub fn evaluate(&self, fhat: &Predictor, alpha: Option<f64>) -> Result<AuditReport> {
        let l = Self::losses_of(&self.test, self.loss, fhat)?;
        let diffs: Vec<f64> = l.iter().zip(&self.best_losses).map(|(a, b)| a - b).collect();
        let (mean, lo, hi) = mean_ci(&diffs, CONFIDENCE);
        Ok(AuditReport::one_sided(
            "excess_risk",
            mean,
            (lo, hi),
            alpha.unwrap_or(f64::INFINITY),
            diffs.len() as u64,
        ))
    }
}

pub fn excess_risk_estimate(
    fhat: &Predictor,
    class: &FunctionClassDesc,
    target: &SmoothTarget,
    labels: &LabelModel,
    loss: LossKind,
    test_n: usize,
    rng_seed: u64,
) -> Result<AuditReport> {
    ExcessRiskEvaluator::new(class, target, labels, loss, test_n, rng_seed)?.evaluate(fhat, None)
}

/// `|f|_mu`, exact where a closed form exists and by a fixed Monte Carlo sample otherwise.
pub fn population_norm(f: &Predictor, base: &BaseDist) -> Result<f64> {
    if let Some(atoms) = base.atoms() {
        let mut s = 0.0;
        for (x, w) in atoms {
            s += w * f.eval(&x)?.powi(2);
        }
        return Ok(s.sqrt());
    }
    let p = &f.params;
    match (f.class.kind, base) {
        (ClassKind::Threshold1d, BaseDist::UniformInterval) => Ok((1.0 - p[0].clamp(0.0, 1.0)).sqrt()),
        (ClassKind::Halfspace, BaseDist::UniformInterval) => {
            let (w, b) = (p[0], p[1]);
            let mass = if w > 0.0 {
                1.0 - (-b / w).clamp(0.0, 1.0)
            } else if w < 0.0 {
                (-b / w).clamp(0.0, 1.0)
            } else if b >= 0.0 {
                1.0
            } else {
                0.0
            };
            Ok(mass.sqrt())
        }
        (ClassKind::LinearBall, BaseDist::UniformInterval) => Ok((p[0] * p[0] / 3.0).sqrt()),
        (ClassKind::LinearBall, BaseDist::UniformBall { dim }) => Ok((dot(p, p) / (*dim as f64 + 2.0)).sqrt()),
        _ => {
            let mut rng = seed::stream(seed::tag("population_norm"));
            let k = 20_000;
            let mut s = 0.0;
            for _ in 0..k {
                s += f.eval(&base.sample(&mut rng))?.powi(2);
            }
            Ok((s / k as f64).sqrt())
        }
    }
}

/// Slack in the comparison `|f|_mu <= 2 |f|_m + slack`.
pub fn norm_comparison_slack(complexity: f64, m: usize, beta: f64) -> f64 {
    (complexity + (1.0 / beta).ln().sqrt()) * 8.0 / (m as f64).sqrt()
}

/// Frequency of `|f|_mu > 2 |f|_m + slack` over fresh public samples and random members.
pub fn norm_comparison_check(
    class: &FunctionClassDesc,
    base: &BaseDist,
    m: usize,
    trials: usize,
    beta: f64,
    rng_seed: u64,
    opts: &SolverOptions,
) -> Result<AuditReport> {
    if trials == 0 || m == 0 {
        return Err(invalid("trials", "need at least one trial and one public point"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", "must lie in (0, 1)"));
    }
    let first = draw_public(base, m, &mut seed::stream(seed::child(rng_seed, "pub", 0)))?;
    // The enumerator caps halfspace instances, so larger samples use a prefix.
    let complexity_sample = if class.kind == ClassKind::Halfspace && first.len() > opts.max_halfspace_points {
        PublicSample::new(first.points()[..opts.max_halfspace_points].to_vec())?
    } else {
        first
    };
    let sups = gp_sup_samples(class, &complexity_sample, 200, seed::child(rng_seed, "complexity", 0), opts)?;
    let g_hat = sups.iter().sum::<f64>() / sups.len() as f64;
    let slack = norm_comparison_slack(g_hat, m, beta);
    let mut violations = 0u64;
    for t in 0..trials as u64 {
        let public = draw_public(base, m, &mut seed::stream(seed::child(rng_seed, "pub", t)))?;
        let f = random_member(class, &mut seed::stream(seed::child(rng_seed, "member", t)));
        let fm = empirical_norm(&evaluate_on(&f, public.points())?)?;
        if population_norm(&f, base)? > 2.0 * fm + slack {
            violations += 1;
        }
    }
    Ok(AuditReport::one_sided(
        format!("norm_comparison(m={m})"),
        violations as f64 / trials as f64,
        clopper_pearson(violations, trials as u64, CONFIDENCE),
        beta,
        trials as u64,
    ))
}

/// Post-processing lower bound on the privacy loss of a learner with
/// real-valued outputs on the public points.
#[allow(clippy::too_many_arguments)]
pub fn continuous_privacy_audit<F>(
    learner: F,
    pair: &NeighborPair,
    bins: usize,
    trials: usize,
    budget: &PrivacyBudget,
    min_count: u64,
    rng_seed: u64,
) -> Result<AuditReport>
where
    F: Fn(&LabeledDataset, u64) -> Result<Vec<f64>>,
{
    if trials < 1000 {
        return Err(Error::Underpowered { trials, minimum: 1000 });
    }
    let run = |d: &LabeledDataset, role: &str| -> Result<BTreeMap<Vec<u16>, u64>> {
        let outs: Vec<Vec<f64>> = (0..trials as u64)
            .map(|t| learner(d, seed::child(rng_seed, role, t)))
            .collect::<Result<_>>()?;
        Ok(bin_counts(outs.iter().map(|v| v.as_slice()), bins))
    };
    let a = run(&pair.d, "D")?;
    let b = run(&pair.dprime, "D'")?;
    let counts = a
        .iter()
        .map(|(k, &ca)| (ca, b.get(k).copied().unwrap_or(0)))
        .collect::<Vec<_>>();
    Ok(ratio_report(
        "continuous_privacy_log_ratio",
        counts.into_iter(),
        trials as u64,
        &PrivacyBudget {
            epsilon: budget.epsilon,
            delta: 0.0,
        },
        min_count,
        true,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(xs: &[(f64, f64)]) -> LabeledDataset {
        LabeledDataset::new(
            xs.iter().map(|&(x, y)| (FeaturePoint::scalar(x), y)).collect(),
            Task::Classification,
        )
        .unwrap()
    }

    #[test]
    fn psi_map_examples() {
        let xi = [0.5, -1.0, 3.0];
        assert_eq!(psi_map(&xi, &[true, false, true], &[true, false, true]).unwrap(), vec![2.5, 1.0, 5.0]);
        assert_eq!(psi_map(&xi, &[false, true, false], &[true, false, true]).unwrap(), vec![-1.5, -3.0, 1.0]);
        let lab = [true, false, false];
        let yt = [true, true, false];
        let once = psi_map(&xi, &lab, &yt).unwrap();
        let complement: Vec<bool> = lab.iter().zip(&yt).map(|(a, b)| if a == b { !b } else { *b }).collect();
        let back = psi_map(&once, &complement, &yt).unwrap();
        for (a, b) in back.iter().zip(&xi) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(psi_map(&xi, &lab, &[true]).is_err());
    }

    #[test]
    fn laplace_ratio_examples() {
        assert_eq!(laplace_shift_ratio(&[0.3, -2.0], &[0.3, -2.0], 4.0).unwrap(), 1.0);
        let r = laplace_shift_ratio(&[0.0], &[2.0], 2.0).unwrap();
        assert!((r - (-1.0f64).exp()).abs() < 1e-15);
        assert!(laplace_shift_ratio(&[0.0], &[2.5], 2.0).is_err());
    }

    #[test]
    fn neighbor_pair_validation() {
        let d = data(&[(0.1, 0.0), (0.5, 1.0)]);
        assert!(NeighborPair::new(d.clone(), d.clone()).is_err());
        let p = NeighborPair::swap(&d, 1, FeaturePoint::scalar(0.9), 0.0).unwrap();
        assert_eq!(p.swapped_index, 1);
        let two = data(&[(0.2, 1.0), (0.6, 0.0)]);
        assert!(NeighborPair::new(d, two).is_err());
    }

    #[test]
    fn tail_bound_example() {
        let inputs = TailInputs {
            tau: 1.0,
            kappa_squared: 0.64,
            expected_sup: 1.2,
        };
        assert!((tail_bound(0.5, 1000.0, &inputs) - 0.24).abs() < 1e-12);
    }

    #[test]
    fn identical_pair_has_zero_distance() {
        let mut rng = seed::stream(1);
        let base = BaseDist::UniformBall { dim: 2 };
        let labels = LabelModel::AgnosticLinear {
            weights: vec![0.3, 0.3],
            noise_sd: 0.1,
        };
        let d = draw_private(&SmoothTarget::uniform(base.clone()).unwrap(), &labels, 10, &mut rng).unwrap();
        let public = draw_public(&base, 6, &mut rng).unwrap();
        let r = ftrl_stability_check(
            &NeighborPair::degenerate(d),
            &public,
            &FunctionClassDesc::linear_ball(2).unwrap(),
            LossKind::Absolute,
            4.0,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn underpowered_audits_are_rejected() {
        let public = PublicSample::from_scalars(&[0.2, 0.8]).unwrap();
        let class = FunctionClassDesc::threshold1d();
        let r = gaussian_complexity_estimate(&class, &public, 50, 0, &SolverOptions::default());
        assert_eq!(r, Err(Error::Underpowered { trials: 50, minimum: 100 }));
        let d = data(&[(0.1, 0.0), (0.5, 1.0)]);
        let pair = NeighborPair::degenerate(d);
        let r = continuous_privacy_audit(|_, _| Ok(vec![0.0]), &pair, 16, 10, &PrivacyBudget::pure(1.0).unwrap(), 10, 0);
        assert!(matches!(r, Err(Error::Underpowered { .. })));
    }

    #[test]
    fn verdict_rules() {
        assert_eq!(AuditReport::one_sided("q", 0.1, (0.05, 0.2), 0.3, 10).verdict, Verdict::Pass);
        assert_eq!(AuditReport::one_sided("q", 0.5, (0.4, 0.6), 0.3, 10).verdict, Verdict::Fail);
        assert_eq!(AuditReport::one_sided("q", 0.3, (0.2, 0.4), 0.3, 10).verdict, Verdict::Inconclusive);
    }

    #[test]
    fn singleton_class_complexity_is_centered() {
        // A threshold above every public point is the only member on an all-anchor sample.
        let public = PublicSample::new(vec![FeaturePoint::anchor(1); 4]).unwrap();
        let r = gaussian_complexity_estimate(&FunctionClassDesc::threshold1d(), &public, 2000, 3, &SolverOptions::default()).unwrap();
        assert!(r.ci_low <= 0.0 && 0.0 <= r.ci_high, "{r:?}");
    }

    #[test]
    fn zero_function_never_violates() {
        let f = Predictor::linear(&[0.0, 0.0]).unwrap();
        assert_eq!(population_norm(&f, &BaseDist::UniformBall { dim: 2 }).unwrap(), 0.0);
        assert!(0.0 <= 2.0 * 0.0 + norm_comparison_slack(0.0, 16, 0.05));
    }

    #[test]
    fn grid_population_norm_is_exact() {
        let g = BaseDist::UniformGrid { k: 4 };
        // Atoms 0.125, 0.375, 0.625, 0.875; threshold at 0.5 keeps two.
        assert_eq!(population_norm(&Predictor::threshold(0.5), &g).unwrap(), 0.5f64.sqrt());
        let f = Predictor::linear(&[0.5]).unwrap();
        let expect = (0.25 * (0.125f64.powi(2) + 0.375f64.powi(2) + 0.625f64.powi(2) + 0.875f64.powi(2)) * 0.25).sqrt();
        assert!((population_norm(&f, &g).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn psi_on_identical_pair() {
        let d = data(&[(0.1, 0.0), (0.4, 1.0), (0.6, 0.0), (0.9, 1.0), (0.5, 1.0)]);
        let public = PublicSample::from_scalars(&[0.3, 0.7]).unwrap();
        let r = psi_coupling_test(&NeighborPair::degenerate(d), &public, &[true, false], &FunctionClassDesc::threshold1d(), 1.0, 2000, 4)
            .unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.verdict, Verdict::Pass);
    }
}
